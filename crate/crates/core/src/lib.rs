pub mod action;
pub mod align;
pub mod compose;
pub mod episode;
pub mod gen;
pub mod layout;
pub mod metrics;
pub mod pipeline;
pub mod pose;
pub mod raster;
pub mod stage;
pub mod synth;

pub use episode::{CameraRig, Episode, EpisodeError, EpisodeMeta, Frame, Role};
pub use pose::{Pose, PoseError};
pub use raster::Mask;
