//! Fingertip (TCP) action trajectories from camera pose streams.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::{CameraRig, Episode};
use crate::pose::{resample_poses, Pose, PoseError};
use crate::stage::{gripper_status, GripperState, StageTrack};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ActionError {
    #[error(transparent)]
    Pose(#[from] PoseError),
    #[error("stage track has {track} labels for {frames} frames")]
    TrackMismatch { track: usize, frames: usize },
    #[error("need more than {horizon} actions, got {len}")]
    InsufficientLength { len: usize, horizon: usize },
    #[error("horizon must be at least 1")]
    ZeroHorizon,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionRecord {
    pub timestamp_ns: i64,
    pub tcp_pose: Pose,
    pub gripper: GripperState,
}

/// Fingertip pose for a camera pose: `camera_pose * T_cam_tcp`.
pub fn camera_to_tcp(camera_pose: &Pose, rig: &CameraRig) -> Result<Pose, PoseError> {
    camera_pose.compose(&rig.t_cam_tcp)
}

/// One action per frame: the camera pose resampled at the frame timestamp,
/// mapped to the fingertip, with the gripper state from `track`.
pub fn extract_actions(episode: &Episode, track: &StageTrack, rig: &CameraRig) -> Result<Vec<ActionRecord>, ActionError> {
    if track.len() != episode.len() {
        return Err(ActionError::TrackMismatch {
            track: track.len(),
            frames: episode.len(),
        });
    }
    let timestamps = episode.timestamps();
    let cams = resample_poses(episode.camera_poses(), &timestamps)?;
    let status = gripper_status(track);
    timestamps
        .iter()
        .zip(&cams)
        .zip(status)
        .map(|((&timestamp_ns, cam), gripper)| {
            Ok(ActionRecord {
                timestamp_ns,
                tcp_pose: camera_to_tcp(cam, rig)?,
                gripper,
            })
        })
        .collect()
}

/// Motion over `horizon` steps expressed in the current TCP frame:
/// `inverse(tcp_i) * tcp_{i+horizon}`.
pub fn relative_actions(actions: &[ActionRecord], horizon: usize) -> Result<Vec<Pose>, ActionError> {
    if horizon == 0 {
        return Err(ActionError::ZeroHorizon);
    }
    if actions.len() <= horizon {
        return Err(ActionError::InsufficientLength {
            len: actions.len(),
            horizon,
        });
    }
    actions
        .iter()
        .zip(&actions[horizon..])
        .map(|(a, b)| Ok(a.tcp_pose.inverse()?.compose(&b.tcp_pose)?))
        .collect()
}

/// One line of `actions.jsonl`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionLine {
    pub t_ns: i64,
    pub trans: [f64; 3],
    pub quat_wxyz: [f64; 4],
    pub gripper: GripperState,
}

impl From<&ActionRecord> for ActionLine {
    fn from(a: &ActionRecord) -> Self {
        Self {
            t_ns: a.timestamp_ns,
            trans: a.tcp_pose.translation(),
            quat_wxyz: a.tcp_pose.quat_wxyz(),
            gripper: a.gripper,
        }
    }
}

impl TryFrom<ActionLine> for ActionRecord {
    type Error = PoseError;

    fn try_from(l: ActionLine) -> Result<Self, Self::Error> {
        Ok(Self {
            timestamp_ns: l.t_ns,
            tcp_pose: Pose::new(l.trans, l.quat_wxyz)?,
            gripper: l.gripper,
        })
    }
}

/// One line of `relative_actions.jsonl`: the motion from frame `idx` to
/// frame `idx + horizon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeActionLine {
    pub idx: usize,
    pub horizon: usize,
    pub trans: [f64; 3],
    pub quat_wxyz: [f64; 4],
}
