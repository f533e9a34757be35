//! Deterministic synthetic paired episodes with complete ground truth.
//!
//! A [`SceneScript`] describes a 2D scene: a scrolling textured background,
//! one object and an effector that is drawn either as a hand (disc) or a
//! gripper (two-finger glyph). The hand episode shows every scene frame; the
//! gripper episode shows the scene frames listed in the script's warp, on
//! its own clock. Pixels are produced with integer arithmetic only, and both
//! episodes share one noise field, so a hand frame and the gripper frame of
//! the same scene time differ only where the sprites differ.

mod render;
mod script;

use std::path::Path;

use image::RgbImage;
use nalgebra::{Matrix4, Rotation3, UnitQuaternion, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::{mask_names, CameraRig, Episode, EpisodeError, EpisodeMeta, Frame, Role};
use crate::layout::{
    ensure_dir, frame_file, read_json, read_jsonl, read_png_rgb, write_episode, write_json, write_jsonl,
    write_png_rgb, write_rig,
};
use crate::pose::{Pose, PoseError, TimedPoseRecord};
use crate::stage::{stage_records, StageLabel, StageRecord, StageTrack};

pub use render::{
    background, effector_center, effector_mask, noise, object_mask, placements, render_frame, Effector,
    Placement, Rendered, GRIPPER_COLOR, HAND_COLOR, SCROLL_PX,
};
pub use script::{
    EffectorPath, ObjectShape, ObjectSpec, PathKey, SceneScript, DEFAULT_CLEARANCE_PX, DEFAULT_FRAME_PERIOD_NS,
    DEFAULT_NOISE_VARIANCE, MAX_NOISE_VARIANCE,
};

/// Spacing of the scripted camera pose samples.
pub const POSE_PERIOD_NS: i64 = 10_000_000;
/// The gripper recording's clock starts this much later than the hand's.
pub const GRIPPER_CLOCK_OFFSET_NS: i64 = 7_000_000;

pub const WARP_FILE: &str = "warp.json";
pub const STAGES_FILE: &str = "stages.jsonl";
pub const TCP_FILE: &str = "tcp.jsonl";
pub const SCRIPT_FILE: &str = "script.json";
pub const COMPOSITES_DIR: &str = "composites";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene script: {0}")]
    InvalidScript(String),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error(transparent)]
    Pose(#[from] PoseError),
}

fn invalid(msg: impl Into<String>) -> SynthError {
    SynthError::InvalidScript(msg.into())
}

fn sprite_inside(script: &SceneScript, p: &Placement) -> bool {
    let r = script.effector.radius as i32;
    let (w, h) = (script.width as i32, script.height as i32);
    let (cx, cy) = p.effector;
    let (ox, oy) = p.object;
    cx - r >= 0
        && cx + r < w
        && cy - r >= 0
        && cy + r < h
        && ox >= 0
        && oy >= 0
        && ox + script.object.width as i32 <= w
        && oy + script.object.height as i32 <= h
}

/// Checks a script for consistency: structure (monotone warp, ordered
/// disjoint windows, keyframes) and, frame by frame, geometry. Both sprites
/// must stay inside the image and never overlap the object; inside a contact
/// window each effector must touch the object, outside it each must keep at
/// least `clearance_px` empty pixels (Chebyshev distance) from it.
pub fn validate(script: &SceneScript) -> Result<(), SynthError> {
    script.check_structure()?;
    let (w, h) = (script.width, script.height);
    let r = script.effector.radius;
    let places = placements(script);
    places.iter().enumerate().try_for_each(|(t, p)| {
        if !sprite_inside(script, p) {
            return Err(invalid(format!("frame {t}: a sprite leaves the image")));
        }
        let object = object_mask(script, p.object);
        let contact = script.is_interactive(t);
        for kind in [Effector::Hand, Effector::Gripper] {
            let eff = effector_mask(kind, p.effector, r, w, h);
            if eff.intersection_count(&object) > 0 {
                return Err(invalid(format!("frame {t}: {kind:?} overlaps the object")));
            }
            if contact && eff.dilate(1).intersection_count(&object) == 0 {
                return Err(invalid(format!(
                    "frame {t}: inside a contact window but {kind:?} does not touch the object"
                )));
            }
            if !contact && eff.dilate(script.clearance_px).intersection_count(&object) > 0 {
                return Err(invalid(format!(
                    "frame {t}: outside contact windows but {kind:?} is within {} px of the object",
                    script.clearance_px
                )));
            }
        }
        Ok(())
    })
}

/// Everything the renderer knows that a pipeline has to recover.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// `warp[j]` = hand frame shown by gripper frame `j`.
    pub warp: Vec<usize>,
    pub hand_timestamps_ns: Vec<i64>,
    pub gripper_timestamps_ns: Vec<i64>,
    pub contact_windows: Vec<[usize; 2]>,
    /// Per hand frame.
    pub stages: Vec<StageLabel>,
    /// Fingertip pose at each hand frame timestamp.
    pub tcp: Vec<(i64, Pose)>,
    /// Ideal gripper frame for every hand frame: the scene at that time
    /// rendered with the gripper sprite.
    pub composites: Vec<RgbImage>,
}

impl GroundTruth {
    /// `(hand index, gripper index)` for every gripper frame.
    pub fn alignment_pairs(&self) -> Vec<(usize, usize)> {
        self.warp.iter().enumerate().map(|(j, &i)| (i, j)).collect()
    }

    pub fn stage_track(&self) -> StageTrack {
        StageTrack::from_labels(self.stages.clone())
    }
}

#[derive(Debug, Clone)]
pub struct SynthPair {
    pub hand: Episode,
    pub gripper: Episode,
    pub truth: GroundTruth,
    pub rig: CameraRig,
}

// Effector position and depth at a fractional scene frame, in floating point.
fn path_at(script: &SceneScript, frame: f64) -> [f64; 3] {
    let keys = &script.effector.keyframes;
    let k = keys.partition_point(|key| key.frame as f64 <= frame);
    let at = |k: &PathKey| [k.x as f64, k.y as f64, k.depth_mm as f64];
    if k == keys.len() {
        return at(&keys[keys.len() - 1]);
    }
    let (a, b) = (&keys[k - 1], &keys[k]);
    let alpha = (frame - a.frame as f64) / (b.frame - a.frame) as f64;
    let (pa, pb) = (at(a), at(b));
    [0, 1, 2].map(|c| pa[c] + alpha * (pb[c] - pa[c]))
}

/// Scripted camera pose at a hand-clock time. Translation follows the
/// effector path (2 mm per pixel, depth from the keys); the rotation is a
/// small tilt that depends on the position in the image.
pub fn camera_pose_at(script: &SceneScript, t_ns: i64) -> Result<Pose, PoseError> {
    let [x, y, depth] = path_at(script, t_ns as f64 / script.frame_period_ns as f64);
    let u = x / script.width as f64 - 0.5;
    let v = y / script.height as f64 - 0.5;
    Pose::new(
        [x * 0.002, y * 0.002, depth * 0.001],
        [1.0, 0.2 * u, 0.1 * v, 0.05 * (u + v)],
    )
}

/// Camera pose samples every [`POSE_PERIOD_NS`] from 0 through the first
/// sample at or after the last hand frame.
pub fn camera_stream(script: &SceneScript) -> Result<Vec<(i64, Pose)>, PoseError> {
    let last = (script.duration_frames as i64 - 1) * script.frame_period_ns;
    let samples = (last + POSE_PERIOD_NS - 1) / POSE_PERIOD_NS;
    (0..=samples)
        .map(|m| {
            let t = m * POSE_PERIOD_NS;
            camera_pose_at(script, t).map(|p| (t, p))
        })
        .collect()
}

fn to_homogeneous(p: &Pose) -> Matrix4<f64> {
    let mut m = p.rotation().to_rotation_matrix().to_homogeneous();
    let t = p.translation();
    m[(0, 3)] = t[0];
    m[(1, 3)] = t[1];
    m[(2, 3)] = t[2];
    m
}

/// Fingertip pose at `t_ns`: the camera stream interpolated along the
/// rotation-matrix geodesic, times the rig transform, all in 4x4 matrices.
fn tcp_truth(stream: &[(i64, Pose)], rig: &CameraRig, t_ns: i64) -> Result<Pose, PoseError> {
    let m = (t_ns / POSE_PERIOD_NS) as usize;
    let (t0, p0) = &stream[m];
    let cam = if *t0 == t_ns {
        to_homogeneous(p0)
    } else {
        let (t1, p1) = &stream[m + 1];
        let alpha = (t_ns - t0) as f64 / (t1 - t0) as f64;
        let r0 = p0.rotation().to_rotation_matrix();
        let r1 = p1.rotation().to_rotation_matrix();
        let rel: Rotation3<f64> = r0.inverse() * r1;
        let r = r0 * rel.powf(alpha);
        let (a, b) = (Vector3::from(p0.translation()), Vector3::from(p1.translation()));
        let mut h = r.to_homogeneous();
        let t = a + (b - a) * alpha;
        h[(0, 3)] = t[0];
        h[(1, 3)] = t[1];
        h[(2, 3)] = t[2];
        h
    };
    let tcp = cam * to_homogeneous(&rig.t_cam_tcp);
    let rot = Rotation3::from_matrix_unchecked(tcp.fixed_view::<3, 3>(0, 0).into_owned());
    let q = UnitQuaternion::from_rotation_matrix(&rot);
    Pose::new(
        [tcp[(0, 3)], tcp[(1, 3)], tcp[(2, 3)]],
        [q.w, q.i, q.j, q.k],
    )
}

/// Renders a script into a hand episode, a gripper episode and their ground
/// truth. Deterministic in the script.
pub fn render_pair(script: &SceneScript) -> Result<SynthPair, SynthError> {
    validate(script)?;
    let places = placements(script);
    let rendered: Vec<(Rendered, Rendered)> = places
        .par_iter()
        .enumerate()
        .map(|(t, p)| {
            (
                render_frame(script, p, t, Effector::Hand),
                render_frame(script, p, t, Effector::Gripper),
            )
        })
        .collect();

    let period = script.frame_period_ns;
    let hand_ts: Vec<i64> = (0..script.duration_frames).map(|t| t as i64 * period).collect();
    let gripper_ts: Vec<i64> = (0..script.warp.len())
        .map(|j| GRIPPER_CLOCK_OFFSET_NS + j as i64 * period)
        .collect();

    let hand_frames = rendered
        .iter()
        .zip(&hand_ts)
        .map(|((h, _), &ts)| {
            Frame::new(ts, h.image.clone())
                .with_mask(mask_names::HAND, h.effector.clone())?
                .with_mask(mask_names::OBJECT, h.object.clone())
        })
        .collect::<Result<Vec<_>, _>>()?;
    let gripper_frames = script
        .warp
        .iter()
        .zip(&gripper_ts)
        .map(|(&t, &ts)| {
            let g = &rendered[t].1;
            Frame::new(ts, g.image.clone())
                .with_mask(mask_names::GRIPPER, g.effector.clone())?
                .with_mask(mask_names::OBJECT, g.object.clone())
        })
        .collect::<Result<Vec<_>, _>>()?;

    let stream = camera_stream(script)?;
    let gripper_poses = script
        .warp
        .iter()
        .zip(&gripper_ts)
        .map(|(&t, &ts)| Ok((ts, camera_pose_at(script, t as i64 * period)?)))
        .collect::<Result<Vec<_>, PoseError>>()?;
    let tcp = hand_ts
        .iter()
        .map(|&t| Ok((t, tcp_truth(&stream, &script.rig, t)?)))
        .collect::<Result<Vec<_>, PoseError>>()?;

    let obj = &script.object.name;
    let hand = Episode::new(
        EpisodeMeta::new(format!("{}-hand", script.episode_id), &script.task, obj),
        Role::Hand,
        hand_frames,
        stream,
    )?;
    let gripper = Episode::new(
        EpisodeMeta::new(format!("{}-gripper", script.episode_id), &script.task, obj),
        Role::Gripper,
        gripper_frames,
        gripper_poses,
    )?;
    let stages = (0..script.duration_frames)
        .map(|t| {
            if script.is_interactive(t) {
                StageLabel::Interactive
            } else {
                StageLabel::NonInteractive
            }
        })
        .collect();
    let truth = GroundTruth {
        warp: script.warp.clone(),
        hand_timestamps_ns: hand_ts,
        gripper_timestamps_ns: gripper_ts,
        contact_windows: script.contact_windows.clone(),
        stages,
        tcp,
        composites: rendered.into_iter().map(|(_, g)| g.image).collect(),
    };
    Ok(SynthPair {
        hand,
        gripper,
        truth,
        rig: script.rig.clone(),
    })
}

/// `truth/warp.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarpFile {
    pub warp: Vec<usize>,
    pub hand_timestamps_ns: Vec<i64>,
    pub gripper_timestamps_ns: Vec<i64>,
    pub contact_windows: Vec<[usize; 2]>,
}

/// Writes `hand/`, `gripper/` (each with `rig.json`) and `truth/` under
/// `dir`.
pub fn write_synth(dir: &Path, pair: &SynthPair, script: &SceneScript) -> Result<(), SynthError> {
    for (name, ep) in [("hand", &pair.hand), ("gripper", &pair.gripper)] {
        let sub = dir.join(name);
        write_episode(&sub, ep, None)?;
        write_rig(&sub, &pair.rig)?;
    }
    let truth_dir = dir.join("truth");
    let comp_dir = truth_dir.join(COMPOSITES_DIR);
    ensure_dir(&comp_dir)?;
    let t = &pair.truth;
    write_json(
        &truth_dir.join(WARP_FILE),
        &WarpFile {
            warp: t.warp.clone(),
            hand_timestamps_ns: t.hand_timestamps_ns.clone(),
            gripper_timestamps_ns: t.gripper_timestamps_ns.clone(),
            contact_windows: t.contact_windows.clone(),
        },
    )?;
    write_jsonl(&truth_dir.join(STAGES_FILE), &stage_records(&t.stage_track()))?;
    let tcp: Vec<TimedPoseRecord> = t.tcp.iter().map(|(ts, p)| TimedPoseRecord::new(*ts, p)).collect();
    write_jsonl(&truth_dir.join(TCP_FILE), &tcp)?;
    write_json(&truth_dir.join(SCRIPT_FILE), script)?;
    t.composites
        .par_iter()
        .enumerate()
        .try_for_each(|(k, img)| write_png_rgb(&comp_dir.join(frame_file(k)), img))?;
    Ok(())
}

/// True when `dir` looks like a synth `truth/` directory.
pub fn is_truth_dir(dir: &Path) -> bool {
    dir.join(WARP_FILE).is_file() && dir.join(COMPOSITES_DIR).is_dir()
}

pub fn read_truth(dir: &Path) -> Result<GroundTruth, SynthError> {
    let warp: WarpFile = read_json(&dir.join(WARP_FILE))?;
    let stages: Vec<StageRecord> = read_jsonl(&dir.join(STAGES_FILE))?;
    let tcp = read_jsonl::<TimedPoseRecord>(&dir.join(TCP_FILE))?
        .into_iter()
        .map(|r| Ok((r.t_ns, r.pose()?)))
        .collect::<Result<Vec<_>, PoseError>>()?;
    let n = warp.hand_timestamps_ns.len();
    if stages.len() != n || tcp.len() != n {
        return Err(invalid(format!(
            "truth directory {} is inconsistent: {n} frames, {} stages, {} tcp poses",
            dir.display(),
            stages.len(),
            tcp.len()
        )));
    }
    let composites = (0..n)
        .into_par_iter()
        .map(|k| read_png_rgb(&dir.join(COMPOSITES_DIR).join(frame_file(k))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GroundTruth {
        warp: warp.warp,
        hand_timestamps_ns: warp.hand_timestamps_ns,
        gripper_timestamps_ns: warp.gripper_timestamps_ns,
        contact_windows: warp.contact_windows,
        stages: stages.into_iter().map(|r| r.stage).collect(),
        tcp,
        composites,
    })
}
