use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use demoforge::align::{embed_builtin, AlignmentMap};
use demoforge::layout::{read_episode, read_json, read_manifest};
use demoforge::pipeline::{
    cmd_evaluate, cmd_prepare, cmd_produce, cmd_produce_with, cmd_synth, read_alignment, Embedder, MockKind,
    PipelineConfig, PipelineError, RunManifest,
};
use demoforge::gen::{MockGenerator, GenError};
use demoforge::synth::{SceneScript, SynthError};
use demoforge::Role;
use tempfile::TempDir;

struct Scene {
    root: TempDir,
}

impl Scene {
    fn new(script: Option<&SceneScript>) -> Self {
        let root = tempfile::tempdir().unwrap();
        let path = script.map(|s| {
            let p = root.path().join("script.json");
            fs::write(&p, serde_json::to_string(s).unwrap()).unwrap();
            p
        });
        cmd_synth(path.as_deref(), &root.path().join("scene"), false).unwrap();
        Scene { root }
    }

    fn p(&self, rel: &str) -> PathBuf {
        self.root.path().join(rel)
    }
}

fn composite_config(scene: &Scene) -> PipelineConfig {
    let mut c = PipelineConfig::default();
    c.generator.mock = Some(MockKind::Composite);
    c.generator.truth_dir = Some(scene.p("scene/truth"));
    c
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn synth_prepare_produce_evaluate() {
    let s = Scene::new(None);
    let cfg = composite_config(&s);
    let sum = cmd_prepare(&s.p("scene/hand"), &s.p("scene/gripper"), &s.p("prep"), &cfg, false).unwrap();
    assert!(sum.aligned_pairs > 0);
    let m: RunManifest = read_json(&s.p("prep/manifest.json")).unwrap();
    assert_eq!(m.command, "prepare");
    assert_eq!(m.config, {
        let mut c = cfg.clone();
        c.paths.hand_dir = Some(s.p("scene/hand"));
        c.paths.gripper_dir = Some(s.p("scene/gripper"));
        c.recorded()
    });
    for a in &m.artifacts {
        assert!(s.p("prep").join(a).exists(), "{a}");
    }
    assert!(!s.p("prep/.partial").exists());
    let comp = read_episode(&s.p("prep/composited")).unwrap();
    assert_eq!(comp.role(), Role::Composited);
    assert_eq!(comp.len(), read_alignment(&s.p("prep")).unwrap().pairs.len());

    let out = cmd_produce(&s.p("scene/hand"), &s.p("data"), &cfg, false).unwrap();
    assert_eq!(out.frames, 120);
    let gen = read_episode(&s.p("data")).unwrap();
    assert_eq!(gen.role(), Role::Generated);
    assert!(read_manifest(&s.p("data")).unwrap().config.is_some());
    for f in ["actions.jsonl", "relative_actions.jsonl", "stages.jsonl", "rig.json"] {
        assert!(s.p("data").join(f).is_file(), "{f}");
    }

    let r = cmd_evaluate(&s.p("data"), &s.p("scene/truth"), &s.p("report.json"), &cfg).unwrap();
    assert!(r.mean_ssim >= 0.99);
    assert_eq!(r.infinite_psnr_frames, 120);
    let on_disk: serde_json::Value = read_json(&s.p("report.json")).unwrap();
    assert!(on_disk["mean_psnr_db"].is_null());
    assert_eq!(on_disk["per_frame"][0]["psnr_db"], "inf");
}

#[test]
fn echo_mock_reproduces_the_hand_frames() {
    let s = Scene::new(None);
    let mut cfg = PipelineConfig::default();
    cfg.generator.mock = Some(MockKind::Echo);
    cmd_produce(&s.p("scene/hand"), &s.p("data"), &cfg, false).unwrap();
    let hand = read_episode(&s.p("scene/hand")).unwrap();
    let gen = read_episode(&s.p("data")).unwrap();
    for (a, b) in hand.frames().iter().zip(gen.frames()) {
        assert_eq!(a.image(), b.image());
        assert_eq!(a.timestamp_ns, b.timestamp_ns);
    }
    // evaluating against an episode directory of equal length
    let r = cmd_evaluate(&s.p("data"), &s.p("scene/hand"), &s.p("r.json"), &cfg).unwrap();
    assert_eq!(r.mean_ssim, 1.0);
}

#[test]
fn unreachable_generator_leaves_no_manifest() {
    let s = Scene::new(None);
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut cfg = PipelineConfig::default();
    cfg.generator.endpoint = Some(format!("http://127.0.0.1:{port}"));
    cfg.generator.timeout_ms = 300;
    let err = cmd_produce(&s.p("scene/hand"), &s.p("data"), &cfg, false).unwrap_err();
    match err {
        PipelineError::Gen(GenError::EpisodeGenerationFailed { failed, .. }) => assert_eq!(failed.len(), 120),
        other => panic!("{other}"),
    }
    assert!(!s.p("data/manifest.json").exists());
}

#[test]
fn no_generator_is_an_error() {
    let s = Scene::new(None);
    let err = cmd_produce(&s.p("scene/hand"), &s.p("data"), &PipelineConfig::default(), false).unwrap_err();
    assert!(matches!(err, PipelineError::NoGenerator), "{err}");
}

#[test]
fn different_config_is_refused_unless_forced() {
    let s = Scene::new(None);
    let (h, g, out) = (s.p("scene/hand"), s.p("scene/gripper"), s.p("prep"));
    let cfg = PipelineConfig::default();
    cmd_prepare(&h, &g, &out, &cfg, false).unwrap();
    // same configuration: allowed
    cmd_prepare(&h, &g, &out, &cfg, false).unwrap();

    let mut other = cfg.clone();
    other.stage.hysteresis = 5;
    let err = cmd_prepare(&h, &g, &out, &other, false).unwrap_err();
    assert!(matches!(err, PipelineError::ConfigMismatch { .. }), "{err}");
    let m: RunManifest = read_json(&out.join("manifest.json")).unwrap();
    assert_eq!(m.config["stage"]["hysteresis"], 3);

    cmd_prepare(&h, &g, &out, &other, true).unwrap();
    let m: RunManifest = read_json(&out.join("manifest.json")).unwrap();
    assert_eq!(m.config["stage"]["hysteresis"], 5);
}

#[test]
fn output_root_is_not_part_of_the_recorded_config() {
    let s = Scene::new(None);
    let cfg = PipelineConfig::default();
    cmd_prepare(&s.p("scene/hand"), &s.p("scene/gripper"), &s.p("a"), &cfg, false).unwrap();
    cmd_prepare(&s.p("scene/hand"), &s.p("scene/gripper"), &s.p("b"), &cfg, false).unwrap();
    assert_eq!(tree(&s.p("a")), tree(&s.p("b")));
}

#[test]
fn invalid_warp_is_rejected() {
    let mut script = SceneScript::bundled_default();
    script.warp[3] = script.warp[2];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, serde_json::to_string(&script).unwrap()).unwrap();
    let err = cmd_synth(Some(&path), &dir.path().join("out"), false).unwrap_err();
    assert!(matches!(err, PipelineError::Synth(SynthError::InvalidScript(_))), "{err}");
    assert!(!dir.path().join("out/manifest.json").exists());
}

#[test]
fn same_seed_gives_identical_trees() {
    let script = SceneScript::random(21, 50).unwrap();
    let (a, b) = (Scene::new(Some(&script)), Scene::new(Some(&script)));
    assert_eq!(tree(&a.p("scene")), tree(&b.p("scene")));

    let mut cfg = PipelineConfig::default();
    cfg.generator.mock = Some(MockKind::Echo);
    for s in [&a, &b] {
        cmd_prepare(&s.p("scene/hand"), &s.p("scene/gripper"), &s.p("prep"), &cfg, false).unwrap();
        cmd_produce(&s.p("scene/hand"), &s.p("data"), &cfg, false).unwrap();
    }
    // paths inside the recorded config differ between the two roots
    let strip = |t: BTreeMap<PathBuf, Vec<u8>>, root: &Path| -> BTreeMap<PathBuf, Vec<u8>> {
        let root = root.to_string_lossy().into_owned();
        t.into_iter()
            .map(|(k, v)| (k, String::from_utf8_lossy(&v).replace(&root, "<root>").into_bytes()))
            .collect()
    };
    for d in ["prep", "data"] {
        assert_eq!(strip(tree(&a.p(d)), a.root.path()), strip(tree(&b.p(d)), b.root.path()), "{d}");
    }
}

#[test]
fn missing_object_mask_is_reported() {
    let s = Scene::new(None);
    fs::remove_dir_all(s.p("scene/hand/masks/object")).unwrap();
    let mut cfg = PipelineConfig::default();
    cfg.generator.mock = Some(MockKind::Echo);
    let err = cmd_produce(&s.p("scene/hand"), &s.p("data"), &cfg, false).unwrap_err();
    match err {
        PipelineError::MissingMask { frame, mask, .. } => assert_eq!((frame, mask.as_str()), (0, "object")),
        other => panic!("{other}"),
    }
}

#[test]
fn produce_needs_a_rig_and_a_hand_episode() {
    let s = Scene::new(None);
    let echo = MockGenerator::echo();
    let cfg = PipelineConfig::default();
    let err = cmd_produce_with(&s.p("scene/gripper"), &s.p("d1"), &cfg, &echo, false).unwrap_err();
    assert!(matches!(err, PipelineError::WrongRole { .. }), "{err}");
    fs::remove_file(s.p("scene/hand/rig.json")).unwrap();
    let err = cmd_produce_with(&s.p("scene/hand"), &s.p("d2"), &cfg, &echo, false).unwrap_err();
    assert!(matches!(err, PipelineError::MissingRig(_)), "{err}");
}

#[test]
fn evaluate_requires_matching_timestamps() {
    let s = Scene::new(None);
    // gripper frames are stamped on their own clock
    let err = cmd_evaluate(&s.p("scene/gripper"), &s.p("scene/truth"), &s.p("r.json"), &PipelineConfig::default())
        .unwrap_err();
    assert!(matches!(err, PipelineError::TimestampNotInTruth { index: 0, .. }), "{err}");
    assert!(!s.p("r.json").exists());
}

#[test]
fn a_hand_recording_can_be_paired_with_itself() {
    let s = Scene::new(None);
    let hand = s.p("scene/hand");
    cmd_prepare(&hand, &hand, &s.p("prep"), &PipelineConfig::default(), false).unwrap();
    let map = read_alignment(&s.p("prep")).unwrap();
    let n = read_episode(&hand).unwrap().len();
    assert_eq!(map.to_map(n, n).unwrap(), AlignmentMap::identity(n));
}

#[test]
fn precomputed_embeddings_are_used() {
    let s = Scene::new(None);
    for role in ["hand", "gripper"] {
        let dir = s.p(&format!("scene/{role}"));
        embed_builtin(&read_episode(&dir).unwrap()).unwrap().write_jsonl(&dir.join("emb.jsonl")).unwrap();
    }
    let mut cfg = PipelineConfig::default();
    cfg.alignment.embedder = Embedder::EpisodeFile;
    cmd_prepare(&s.p("scene/hand"), &s.p("scene/gripper"), &s.p("a"), &cfg, false).unwrap();
    cmd_prepare(&s.p("scene/hand"), &s.p("scene/gripper"), &s.p("b"), &PipelineConfig::default(), false).unwrap();
    assert_eq!(read_alignment(&s.p("a")).unwrap(), read_alignment(&s.p("b")).unwrap());

    fs::remove_file(s.p("scene/gripper/emb.jsonl")).unwrap();
    assert!(cmd_prepare(&s.p("scene/hand"), &s.p("scene/gripper"), &s.p("c"), &cfg, false).is_err());
}

#[test]
fn stale_partial_output_is_cleared() {
    let s = Scene::new(None);
    fs::create_dir_all(s.p("prep/.partial/junk")).unwrap();
    cmd_prepare(&s.p("scene/hand"), &s.p("scene/gripper"), &s.p("prep"), &PipelineConfig::default(), false).unwrap();
    assert!(!s.p("prep/.partial").exists());
    assert!(!s.p("prep/junk").exists());
}
