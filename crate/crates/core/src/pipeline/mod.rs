//! The four commands: `prepare` (paired demos to aligned, composited
//! training pairs), `produce` (hand demo to actions plus generated gripper
//! frames), `evaluate` and `synth`.
//!
//! Commands write into `<out>/.partial` and move the results into `<out>`
//! only after every artifact has been read back and checked; the manifest is
//! moved last. An existing `<out>/manifest.json` recorded with a different
//! configuration makes a command refuse to run unless forced.

mod config;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::action::{extract_actions, relative_actions, ActionError, ActionLine, RelativeActionLine};
use crate::align::{
    apply_alignment, embed_builtin, nn_align, AlignError, AlignmentFile, EmbeddingSequence,
};
use crate::compose::{composite_episode, ComposeError};
use crate::episode::{mask_names, Episode, EpisodeError, Role};
use crate::gen::{generate_episode, GenError, Generator, HttpGenerator, MockGenerator};
use crate::layout::{
    read_episode, read_json, read_jsonl, read_rig, write_episode, write_json, write_jsonl, write_rig, MANIFEST,
    RIG,
};
use crate::metrics::{evaluate_episode, evaluate_frames, MetricError, ReportFile};
use crate::pose::PoseError;
use crate::raster::Mask;
use crate::stage::{classify_track, stage_records, StageError, StageRecord, StageTrack};
use crate::synth::{is_truth_dir, read_truth, render_pair, write_synth, SceneScript, SynthError};

pub use config::{AlignmentConfig, Embedder, ExportConfig, GeneratorConfig, MockKind, PathsConfig, PipelineConfig};

pub const PARTIAL_DIR: &str = ".partial";
pub const EMBEDDINGS_FILE: &str = "emb.jsonl";
pub const ALIGNMENT_FILE: &str = "alignment.json";
pub const STAGES_FILE: &str = "stages.jsonl";
pub const ACTIONS_FILE: &str = "actions.jsonl";
pub const RELATIVE_ACTIONS_FILE: &str = "relative_actions.jsonl";
pub const ALIGNED_HAND_DIR: &str = "aligned_hand";
pub const ALIGNED_GRIPPER_DIR: &str = "aligned_gripper";
pub const COMPOSITED_DIR: &str = "composited";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path} was produced with a different configuration; use --force to overwrite")]
    ConfigMismatch { path: PathBuf },
    #[error("{0} has no rig.json")]
    MissingRig(PathBuf),
    #[error("no generator configured: set an endpoint or a mock")]
    NoGenerator,
    #[error("{dir}: expected a {expected:?} episode, found {found:?}")]
    WrongRole { dir: PathBuf, expected: Role, found: Role },
    #[error("{episode}: frame {frame} has no '{mask}' mask")]
    MissingMask { episode: String, frame: usize, mask: String },
    #[error("{0} has no frames")]
    EmptyEpisode(PathBuf),
    #[error("prediction frame {index} (t = {timestamp_ns} ns) has no truth frame with that timestamp")]
    TimestampNotInTruth { index: usize, timestamp_ns: i64 },
    #[error("artifact check failed: {0}")]
    InvalidArtifact(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error(transparent)]
    Stage(#[from] StageError),
    #[error(transparent)]
    Compose(#[from] ComposeError),
    #[error(transparent)]
    Action(#[from] ActionError),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Pose(#[from] PoseError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// `manifest.json` at the root of a `prepare` or `synth` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub format_version: u32,
    pub config: Value,
    pub artifacts: Vec<String>,
}

/// Output directory with a quarantine area for the run in progress.
struct Staging {
    out: PathBuf,
    partial: PathBuf,
}

impl Staging {
    /// Refuses when `out/manifest.json` records a different configuration,
    /// unless `force`. Clears any stale partial output.
    fn open(out: &Path, recorded: &Value, force: bool) -> Result<Self, PipelineError> {
        let manifest = out.join(MANIFEST);
        if manifest.is_file() && !force {
            let existing: Value = read_json(&manifest)?;
            if existing.get("config") != Some(recorded) {
                return Err(PipelineError::ConfigMismatch { path: out.to_path_buf() });
            }
        }
        let partial = out.join(PARTIAL_DIR);
        if partial.exists() {
            fs::remove_dir_all(&partial).map_err(io_err(&partial))?;
        }
        fs::create_dir_all(&partial).map_err(io_err(&partial))?;
        Ok(Self {
            out: out.to_path_buf(),
            partial,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.partial.join(name)
    }

    /// Moves every staged entry into the output root, replacing entries of
    /// the same name, with the manifest last.
    fn promote(self) -> Result<(), PipelineError> {
        let mut names: Vec<String> = fs::read_dir(&self.partial)
            .map_err(io_err(&self.partial))?
            .map(|e| {
                e.map(|e| e.file_name().to_string_lossy().into_owned())
                    .map_err(io_err(&self.partial))
            })
            .collect::<Result<_, _>>()?;
        names.sort_by_key(|n| (n == MANIFEST, n.clone()));
        for name in names {
            let dst = self.out.join(&name);
            if dst.is_dir() {
                fs::remove_dir_all(&dst).map_err(io_err(&dst))?;
            } else if dst.exists() {
                fs::remove_file(&dst).map_err(io_err(&dst))?;
            }
            let src = self.partial.join(&name);
            fs::rename(&src, &dst).map_err(io_err(&src))?;
        }
        fs::remove_dir(&self.partial).map_err(io_err(&self.partial))
    }
}

fn expect_role(dir: &Path, ep: &Episode, expected: Role) -> Result<(), PipelineError> {
    if ep.role() != expected {
        return Err(PipelineError::WrongRole {
            dir: dir.to_path_buf(),
            expected,
            found: ep.role(),
        });
    }
    if ep.is_empty() {
        return Err(PipelineError::EmptyEpisode(dir.to_path_buf()));
    }
    Ok(())
}

/// `(effector, object)` masks for every frame.
fn effector_object_masks<'a>(ep: &'a Episode, effector: &str) -> Result<Vec<(&'a Mask, &'a Mask)>, PipelineError> {
    ep.frames()
        .iter()
        .enumerate()
        .map(|(frame, f)| {
            let get = |name: &str| {
                f.mask(name).ok_or_else(|| PipelineError::MissingMask {
                    episode: ep.episode_id().to_string(),
                    frame,
                    mask: name.to_string(),
                })
            };
            Ok((get(effector)?, get(mask_names::OBJECT)?))
        })
        .collect()
}

/// Episode used on the gripper side of `prepare`. A hand recording may be
/// paired with itself, in which case its hand mask plays the gripper mask.
fn gripper_side(ep: Episode) -> Result<Episode, PipelineError> {
    if ep.role() == Role::Gripper {
        return Ok(ep);
    }
    let (meta, _, mut frames, poses) = ep.into_parts();
    for f in &mut frames {
        if let Some(m) = f.mask(mask_names::HAND).cloned() {
            f.insert_mask(mask_names::GRIPPER, m)?;
        }
    }
    Ok(Episode::new(meta, Role::Gripper, frames, poses)?)
}

fn embeddings(dir: &Path, ep: &Episode, embedder: Embedder) -> Result<EmbeddingSequence, PipelineError> {
    let seq = match embedder {
        Embedder::Builtin => embed_builtin(ep)?,
        Embedder::EpisodeFile => EmbeddingSequence::read_jsonl(&dir.join(EMBEDDINGS_FILE), ep.episode_id())?,
    };
    if seq.len() != ep.len() {
        return Err(PipelineError::InvalidArtifact(format!(
            "{}: {} embeddings for {} frames",
            dir.display(),
            seq.len(),
            ep.len()
        )));
    }
    Ok(seq)
}

fn check_episode(dir: &Path, expected: &Episode) -> Result<(), PipelineError> {
    let back = read_episode(dir)?;
    if back.frames() != expected.frames() || back.role() != expected.role() {
        return Err(PipelineError::InvalidArtifact(format!(
            "{} does not read back as written",
            dir.display()
        )));
    }
    Ok(())
}

fn check_len<T>(path: &Path, items: &[T], want: usize) -> Result<(), PipelineError> {
    if items.len() != want {
        return Err(PipelineError::InvalidArtifact(format!(
            "{} has {} lines, expected {want}",
            path.display(),
            items.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrepareSummary {
    pub hand_frames: usize,
    pub gripper_frames: usize,
    pub aligned_pairs: usize,
    pub interactive_frames: usize,
}

/// Aligns a gripper recording to a hand recording and composites the
/// training targets. Writes `aligned_hand/`, `aligned_gripper/`,
/// `composited/`, `alignment.json`, `stages.jsonl` and `manifest.json`.
pub fn cmd_prepare(
    hand_dir: &Path,
    gripper_dir: &Path,
    out_dir: &Path,
    config: &PipelineConfig,
    force: bool,
) -> Result<PrepareSummary, PipelineError> {
    let mut config = config.clone();
    config.paths.hand_dir = Some(hand_dir.to_path_buf());
    config.paths.gripper_dir = Some(gripper_dir.to_path_buf());
    config.paths.out_dir = Some(out_dir.to_path_buf());
    let recorded = config.recorded();
    let staging = Staging::open(out_dir, &recorded, force)?;

    let hand = read_episode(hand_dir)?;
    expect_role(hand_dir, &hand, Role::Hand)?;
    let gripper = read_episode(gripper_dir)?;
    if gripper.is_empty() {
        return Err(PipelineError::EmptyEpisode(gripper_dir.to_path_buf()));
    }
    let gripper = gripper_side(gripper)?;

    let tol = config.alignment.cycle_tolerance;
    let map = nn_align(
        &embeddings(hand_dir, &hand, config.alignment.embedder)?,
        &embeddings(gripper_dir, &gripper, config.alignment.embedder)?,
        tol,
    )?;
    let (aligned_hand, aligned_gripper) = apply_alignment(&hand, &gripper, &map)?;
    let masks = effector_object_masks(&aligned_gripper, mask_names::GRIPPER)?;
    let track = classify_track(&masks, &config.stage)?;
    let (composited, _) = composite_episode(
        &aligned_hand,
        &aligned_gripper,
        &track,
        map.pairs(),
        config.inpaint_max_iters,
    )?;

    let alignment = map.to_file(hand.episode_id(), gripper.episode_id(), tol);
    let stages = stage_records(&track);
    let episodes = [
        (ALIGNED_HAND_DIR, &aligned_hand),
        (ALIGNED_GRIPPER_DIR, &aligned_gripper),
        (COMPOSITED_DIR, &composited),
    ];
    for (name, ep) in episodes {
        write_episode(&staging.path(name), ep, Some(recorded.clone()))?;
    }
    write_json(&staging.path(ALIGNMENT_FILE), &alignment)?;
    write_jsonl(&staging.path(STAGES_FILE), &stages)?;

    for (name, ep) in episodes {
        check_episode(&staging.path(name), ep)?;
    }
    let back: AlignmentFile = read_json(&staging.path(ALIGNMENT_FILE))?;
    if back.to_map(hand.len(), gripper.len())? != map {
        return Err(PipelineError::InvalidArtifact("alignment.json does not read back".into()));
    }
    let back: Vec<StageRecord> = read_jsonl(&staging.path(STAGES_FILE))?;
    check_len(&staging.path(STAGES_FILE), &back, map.len())?;

    let manifest = RunManifest {
        command: "prepare".into(),
        format_version: FORMAT_VERSION,
        config: recorded,
        artifacts: [ALIGNED_HAND_DIR, ALIGNED_GRIPPER_DIR, COMPOSITED_DIR, ALIGNMENT_FILE, STAGES_FILE]
            .map(String::from)
            .to_vec(),
    };
    write_json(&staging.path(MANIFEST), &manifest)?;
    staging.promote()?;
    Ok(PrepareSummary {
        hand_frames: hand.len(),
        gripper_frames: gripper.len(),
        aligned_pairs: map.len(),
        interactive_frames: track.labels().iter().filter(|l| **l == crate::stage::StageLabel::Interactive).count(),
    })
}

/// The generator selected by `config.generator`: a mock when one is set,
/// otherwise the HTTP client for the endpoint.
pub fn generator_from_config(config: &GeneratorConfig) -> Result<Box<dyn Generator>, PipelineError> {
    match (config.mock, &config.endpoint) {
        (Some(MockKind::Echo), _) => Ok(Box::new(MockGenerator::echo())),
        (Some(MockKind::Composite), _) => {
            let dir = config
                .truth_dir
                .as_ref()
                .ok_or_else(|| PipelineError::Config("the composite mock needs a truth directory".into()))?;
            if !is_truth_dir(dir) {
                return Err(PipelineError::Config(format!("{} is not a truth directory", dir.display())));
            }
            Ok(Box::new(MockGenerator::composite_truth(dir)))
        }
        (None, Some(endpoint)) => Ok(Box::new(HttpGenerator::new(endpoint, config.timeout_ms))),
        (None, None) => Err(PipelineError::NoGenerator),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProduceSummary {
    pub frames: usize,
    pub contact_events: Vec<(usize, usize)>,
    pub relative_actions: usize,
}

/// Turns a hand recording into a policy dataset using the generator from the
/// configuration. See [`cmd_produce_with`].
pub fn cmd_produce(
    hand_dir: &Path,
    out_dir: &Path,
    config: &PipelineConfig,
    force: bool,
) -> Result<ProduceSummary, PipelineError> {
    let generator = generator_from_config(&config.generator)?;
    cmd_produce_with(hand_dir, out_dir, config, generator.as_ref(), force)
}

/// Stage classification, action extraction and frame generation for a hand
/// recording. The output directory is the generated episode itself, plus
/// `actions.jsonl`, `relative_actions.jsonl`, `stages.jsonl` and `rig.json`.
pub fn cmd_produce_with(
    hand_dir: &Path,
    out_dir: &Path,
    config: &PipelineConfig,
    generator: &dyn Generator,
    force: bool,
) -> Result<ProduceSummary, PipelineError> {
    let mut config = config.clone();
    config.paths.hand_dir = Some(hand_dir.to_path_buf());
    config.paths.out_dir = Some(out_dir.to_path_buf());
    let recorded = config.recorded();
    let staging = Staging::open(out_dir, &recorded, force)?;

    let hand = read_episode(hand_dir)?;
    expect_role(hand_dir, &hand, Role::Hand)?;
    if !hand_dir.join(RIG).is_file() {
        return Err(PipelineError::MissingRig(hand_dir.to_path_buf()));
    }
    let rig = read_rig(hand_dir)?;
    let masks = effector_object_masks(&hand, mask_names::HAND)?;
    let track = classify_track(&masks, &config.stage)?;
    let actions = extract_actions(&hand, &track, &rig)?;
    let horizon = config.export.horizon;
    let relative = relative_actions(&actions, horizon)?;
    let generated = generate_episode(&hand, hand.obj_name(), generator, config.generator.concurrency)?;

    let action_lines: Vec<ActionLine> = actions.iter().map(ActionLine::from).collect();
    let relative_lines: Vec<RelativeActionLine> = relative
        .iter()
        .enumerate()
        .map(|(idx, p)| RelativeActionLine {
            idx,
            horizon,
            trans: p.translation(),
            quat_wxyz: p.quat_wxyz(),
        })
        .collect();
    write_episode(&staging.partial, &generated, Some(recorded.clone()))?;
    write_rig(&staging.partial, &rig)?;
    write_jsonl(&staging.path(STAGES_FILE), &stage_records(&track))?;
    write_jsonl(&staging.path(ACTIONS_FILE), &action_lines)?;
    write_jsonl(&staging.path(RELATIVE_ACTIONS_FILE), &relative_lines)?;

    check_episode(&staging.partial, &generated)?;
    let n = hand.len();
    check_len(&staging.path(STAGES_FILE), &read_jsonl::<StageRecord>(&staging.path(STAGES_FILE))?, n)?;
    let back: Vec<ActionLine> = read_jsonl(&staging.path(ACTIONS_FILE))?;
    check_len(&staging.path(ACTIONS_FILE), &back, n)?;
    if back != action_lines {
        return Err(PipelineError::InvalidArtifact("actions.jsonl does not read back".into()));
    }
    let back: Vec<RelativeActionLine> = read_jsonl(&staging.path(RELATIVE_ACTIONS_FILE))?;
    check_len(&staging.path(RELATIVE_ACTIONS_FILE), &back, n - horizon)?;
    read_rig(&staging.partial)?;
    staging.promote()?;
    Ok(ProduceSummary {
        frames: n,
        contact_events: track.contact_events().to_vec(),
        relative_actions: relative.len(),
    })
}

/// Scores predicted frames against truth and writes `report_path`.
///
/// `truth_dir` is either an episode directory of the same length as the
/// prediction, or a synth `truth/` directory, in which case each predicted
/// frame is compared with the truth composite carrying the same timestamp.
pub fn cmd_evaluate(
    pred_dir: &Path,
    truth_dir: &Path,
    report_path: &Path,
    config: &PipelineConfig,
) -> Result<ReportFile, PipelineError> {
    let mut config = config.clone();
    config.paths.pred_dir = Some(pred_dir.to_path_buf());
    config.paths.truth_dir = Some(truth_dir.to_path_buf());
    config.paths.out_dir = None;

    let pred = read_episode(pred_dir)?;
    if pred.is_empty() {
        return Err(PipelineError::EmptyEpisode(pred_dir.to_path_buf()));
    }
    let report = if is_truth_dir(truth_dir) {
        let truth = read_truth(truth_dir)?;
        let targets = pred
            .frames()
            .iter()
            .enumerate()
            .map(|(index, f)| {
                truth
                    .hand_timestamps_ns
                    .binary_search(&f.timestamp_ns)
                    .map(|k| &truth.composites[k])
                    .map_err(|_| PipelineError::TimestampNotInTruth {
                        index,
                        timestamp_ns: f.timestamp_ns,
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let images: Vec<_> = pred.frames().iter().map(|f| f.image()).collect();
        evaluate_frames(&images, &targets)?
    } else {
        evaluate_episode(&pred, &read_episode(truth_dir)?)?
    };
    let file = ReportFile::new(config.recorded(), &report);
    if let Some(parent) = report_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let tmp = report_path.with_extension("json.partial");
    write_json(&tmp, &file)?;
    let back: ReportFile = read_json(&tmp)?;
    if back.per_frame.len() != file.per_frame.len() {
        return Err(PipelineError::InvalidArtifact("report does not read back".into()));
    }
    fs::rename(&tmp, report_path).map_err(io_err(&tmp))?;
    Ok(file)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSummary {
    pub hand_frames: usize,
    pub gripper_frames: usize,
    pub contact_windows: Vec<[usize; 2]>,
}

/// Renders a scene script (the bundled default when `script_path` is
/// `None`) into `hand/`, `gripper/` and `truth/` under `out_dir`.
pub fn cmd_synth(script_path: Option<&Path>, out_dir: &Path, force: bool) -> Result<SynthSummary, PipelineError> {
    let script = match script_path {
        Some(p) => SceneScript::from_json(&fs::read_to_string(p).map_err(io_err(p))?)?,
        None => SceneScript::bundled_default(),
    };
    let recorded = serde_json::to_value(&script).expect("script serializes");
    let staging = Staging::open(out_dir, &recorded, force)?;
    let pair = render_pair(&script)?;
    write_synth(&staging.partial, &pair, &script)?;

    check_episode(&staging.path("hand"), &pair.hand)?;
    check_episode(&staging.path("gripper"), &pair.gripper)?;
    if read_truth(&staging.path("truth"))? != pair.truth {
        return Err(PipelineError::InvalidArtifact("truth/ does not read back".into()));
    }
    let manifest = RunManifest {
        command: "synth".into(),
        format_version: FORMAT_VERSION,
        config: recorded,
        artifacts: ["hand", "gripper", "truth"].map(String::from).to_vec(),
    };
    write_json(&staging.path(MANIFEST), &manifest)?;
    staging.promote()?;
    Ok(SynthSummary {
        hand_frames: pair.hand.len(),
        gripper_frames: pair.gripper.len(),
        contact_windows: script.contact_windows,
    })
}

/// Alignment map stored by `prepare`.
pub fn read_alignment(out_dir: &Path) -> Result<AlignmentFile, PipelineError> {
    Ok(read_json(&out_dir.join(ALIGNMENT_FILE))?)
}

/// Stage labels stored by `prepare` or `produce`.
pub fn read_stages(out_dir: &Path) -> Result<StageTrack, PipelineError> {
    let records: Vec<StageRecord> = read_jsonl(&out_dir.join(STAGES_FILE))?;
    Ok(StageTrack::from_labels(records.into_iter().map(|r| r.stage).collect()))
}
