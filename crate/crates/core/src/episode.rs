//! Episode data model: frames with masks, camera pose streams and rig
//! calibration.

use std::collections::BTreeMap;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pose::{check_stream, Pose, PoseError};
use crate::raster::Mask;

/// Well-known mask names.
pub mod mask_names {
    pub const HAND: &str = "hand";
    pub const GRIPPER: &str = "gripper";
    pub const OBJECT: &str = "object";
    pub const FOREGROUND: &str = "foreground";
    pub const COMPOSITE_FG: &str = "composite_fg";
    pub const INPAINT: &str = "inpaint";
}

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("frame timestamps must be strictly increasing (frame {0})")]
    UnorderedFrames(usize),
    #[error("pose stream: {0}")]
    Pose(#[from] PoseError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: String,
        source: image::ImageError,
    },
    #[error("malformed episode: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Hand,
    Gripper,
    Generated,
    Composited,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub timestamp_ns: i64,
    image: RgbImage,
    masks: BTreeMap<String, Mask>,
}

impl Frame {
    pub fn new(timestamp_ns: i64, image: RgbImage) -> Self {
        Self {
            timestamp_ns,
            image,
            masks: BTreeMap::new(),
        }
    }

    pub fn with_mask(mut self, name: &str, mask: Mask) -> Result<Self, EpisodeError> {
        self.insert_mask(name, mask)?;
        Ok(self)
    }

    pub fn insert_mask(&mut self, name: &str, mask: Mask) -> Result<(), EpisodeError> {
        if mask.dimensions() != self.image.dimensions() {
            return Err(EpisodeError::DimMismatch(format!(
                "mask '{name}' is {:?}, image is {:?}",
                mask.dimensions(),
                self.image.dimensions()
            )));
        }
        self.masks.insert(name.to_string(), mask);
        Ok(())
    }

    pub fn image(&self) -> &RgbImage {
        &self.image
    }

    pub fn dimensions(&self) -> (u32, u32) {
        self.image.dimensions()
    }

    pub fn mask(&self, name: &str) -> Option<&Mask> {
        self.masks.get(name)
    }

    pub fn masks(&self) -> &BTreeMap<String, Mask> {
        &self.masks
    }

    /// Same image and masks at a different timestamp.
    pub fn restamped(&self, timestamp_ns: i64) -> Frame {
        Frame {
            timestamp_ns,
            ..self.clone()
        }
    }
}

/// Descriptive fields of an episode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeMeta {
    pub episode_id: String,
    pub task: String,
    pub obj_name: String,
}

impl EpisodeMeta {
    pub fn new(episode_id: impl Into<String>, task: impl Into<String>, obj_name: impl Into<String>) -> Self {
        Self {
            episode_id: episode_id.into(),
            task: task.into(),
            obj_name: obj_name.into(),
        }
    }
}

/// A recorded or synthesized demonstration. Immutable once built; stages
/// produce new episodes rather than editing existing ones.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    meta: EpisodeMeta,
    role: Role,
    frames: Vec<Frame>,
    camera_poses: Vec<(i64, Pose)>,
}

impl Episode {
    pub fn new(
        meta: EpisodeMeta,
        role: Role,
        frames: Vec<Frame>,
        camera_poses: Vec<(i64, Pose)>,
    ) -> Result<Self, EpisodeError> {
        for (k, w) in frames.windows(2).enumerate() {
            if w[1].timestamp_ns <= w[0].timestamp_ns {
                return Err(EpisodeError::UnorderedFrames(k + 1));
            }
            if w[1].dimensions() != w[0].dimensions() {
                return Err(EpisodeError::DimMismatch(format!(
                    "frame {} is {:?}, frame {} is {:?}",
                    k + 1,
                    w[1].dimensions(),
                    k,
                    w[0].dimensions()
                )));
            }
        }
        check_stream(&camera_poses)?;
        Ok(Self {
            meta,
            role,
            frames,
            camera_poses,
        })
    }

    pub fn meta(&self) -> &EpisodeMeta {
        &self.meta
    }

    pub fn episode_id(&self) -> &str {
        &self.meta.episode_id
    }

    pub fn task(&self) -> &str {
        &self.meta.task
    }

    pub fn obj_name(&self) -> &str {
        &self.meta.obj_name
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn camera_poses(&self) -> &[(i64, Pose)] {
        &self.camera_poses
    }

    pub fn timestamps(&self) -> Vec<i64> {
        self.frames.iter().map(|f| f.timestamp_ns).collect()
    }

    /// `(width, height)` of the frames, `None` for an empty episode.
    pub fn dimensions(&self) -> Option<(u32, u32)> {
        self.frames.first().map(Frame::dimensions)
    }

    pub fn into_parts(self) -> (EpisodeMeta, Role, Vec<Frame>, Vec<(i64, Pose)>) {
        (self.meta, self.role, self.frames, self.camera_poses)
    }
}

/// Fisheye intrinsics. Carried through for downstream consumers; nothing in
/// this crate undistorts images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisheyeIntrinsics {
    pub focal: [f64; 2],
    pub center: [f64; 2],
    pub distortion: Vec<f64>,
}

impl Default for FisheyeIntrinsics {
    fn default() -> Self {
        Self {
            focal: [420.0, 420.0],
            center: [48.0, 48.0],
            distortion: vec![0.05, -0.01, 0.002, 0.0],
        }
    }
}

/// Wrist camera calibration: intrinsics plus the fixed camera-to-fingertip
/// transform. Stored on disk as `rig.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub t_cam_tcp: Pose,
    pub intrinsics: FisheyeIntrinsics,
}

impl Default for CameraRig {
    /// Fingertip 4 cm below and 18 cm in front of the lens, pitched 0.1 rad.
    fn default() -> Self {
        Self {
            t_cam_tcp: Pose::from_axis_angle([0.0, 0.04, 0.18], [1.0, 0.0, 0.0], 0.1)
                .expect("constant rig"),
            intrinsics: FisheyeIntrinsics::default(),
        }
    }
}
