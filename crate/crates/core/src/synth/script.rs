use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::episode::CameraRig;

pub const DEFAULT_FRAME_PERIOD_NS: i64 = 33_333_333;
pub const DEFAULT_NOISE_VARIANCE: u32 = 4;
pub const DEFAULT_CLEARANCE_PX: u32 = 8;
pub const MAX_NOISE_VARIANCE: u32 = 16;

fn default_frame_period() -> i64 {
    DEFAULT_FRAME_PERIOD_NS
}

fn default_noise_variance() -> u32 {
    DEFAULT_NOISE_VARIANCE
}

fn default_clearance() -> u32 {
    DEFAULT_CLEARANCE_PX
}

/// Effector center at a scene frame, in pixels, plus camera depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathKey {
    pub frame: usize,
    pub x: i32,
    pub y: i32,
    pub depth_mm: i32,
}

/// Piecewise-linear effector path. Positions between keys use integer
/// (floor) interpolation; after the last key the effector holds still.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectorPath {
    pub radius: u32,
    pub keyframes: Vec<PathKey>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectShape {
    Rect,
    Ellipse,
}

/// The manipulated object. `x`, `y` is the top-left corner of its bounding
/// box at frame 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub name: String,
    pub shape: ObjectShape,
    pub width: u32,
    pub height: u32,
    pub color: [u8; 3],
    pub x: i32,
    pub y: i32,
}

/// Everything needed to render a paired hand/gripper episode.
///
/// `warp[j]` is the scene frame shown by gripper frame `j`; the hand
/// episode shows every scene frame `0..duration_frames`. During a contact
/// window `[start, end]` (inclusive) the effector touches the object and
/// carries it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneScript {
    pub seed: u64,
    pub episode_id: String,
    pub task: String,
    pub duration_frames: usize,
    pub width: u32,
    pub height: u32,
    #[serde(default = "default_frame_period")]
    pub frame_period_ns: i64,
    #[serde(default = "default_noise_variance")]
    pub noise_variance: u32,
    #[serde(default = "default_clearance")]
    pub clearance_px: u32,
    pub effector: EffectorPath,
    pub object: ObjectSpec,
    pub warp: Vec<usize>,
    pub contact_windows: Vec<[usize; 2]>,
    #[serde(default)]
    pub rig: CameraRig,
}

const DEFAULT_SCRIPT: &str = include_str!("default_scene.json");

// geometry used by `SceneScript::random`
const SIDE: u32 = 96;
const RADIUS: i32 = 10;
const OBJ_W: u32 = 14;
const OBJ_H: u32 = 24;
const OBJ_X: i32 = 64;
const RELEASE_GAP: i32 = 12;

fn invalid(msg: impl Into<String>) -> SynthError {
    SynthError::InvalidScript(msg.into())
}

impl SceneScript {
    /// The script shipped with the crate (96x96, 120 frames, two contacts).
    pub fn bundled_default() -> SceneScript {
        serde_json::from_str(DEFAULT_SCRIPT).expect("bundled scene script parses")
    }

    pub fn from_json(text: &str) -> Result<SceneScript, SynthError> {
        serde_json::from_str(text).map_err(|e| invalid(format!("malformed script: {e}")))
    }

    pub fn is_interactive(&self, frame: usize) -> bool {
        self.contact_windows.iter().any(|w| w[0] <= frame && frame <= w[1])
    }

    /// Structural checks. Geometric consistency (contact inside windows,
    /// clearance outside) is checked by [`super::validate`], which needs the
    /// rasterized sprites.
    pub(super) fn check_structure(&self) -> Result<(), SynthError> {
        if self.duration_frames == 0 {
            return Err(invalid("duration_frames must be positive"));
        }
        if self.width < 16 || self.height < 16 {
            return Err(invalid(format!("image {}x{} is too small", self.width, self.height)));
        }
        if self.frame_period_ns <= 0 {
            return Err(invalid("frame_period_ns must be positive"));
        }
        if self.noise_variance > MAX_NOISE_VARIANCE {
            return Err(invalid(format!(
                "noise_variance {} exceeds {MAX_NOISE_VARIANCE}",
                self.noise_variance
            )));
        }
        if self.effector.radius < 6 {
            return Err(invalid("effector radius must be at least 6"));
        }
        if self.object.width == 0 || self.object.height == 0 {
            return Err(invalid("object has zero size"));
        }
        if self.object.name.trim().is_empty() {
            return Err(invalid("object name is empty"));
        }

        let keys = &self.effector.keyframes;
        match keys.first() {
            None => return Err(invalid("effector path has no keyframes")),
            Some(k) if k.frame != 0 => return Err(invalid("first keyframe must be at frame 0")),
            _ => {}
        }
        if let Some(k) = keys.windows(2).position(|w| w[1].frame <= w[0].frame) {
            return Err(invalid(format!("keyframe {} is not after keyframe {k}", k + 1)));
        }
        if let Some(k) = keys.iter().find(|k| k.depth_mm <= 0) {
            return Err(invalid(format!("non-positive depth at frame {}", k.frame)));
        }

        if self.warp.is_empty() {
            return Err(invalid("warp is empty"));
        }
        if let Some(j) = self.warp.windows(2).position(|w| w[1] <= w[0]) {
            return Err(invalid(format!("warp is not strictly increasing at gripper frame {}", j + 1)));
        }
        if let Some(&last) = self.warp.last() {
            if last >= self.duration_frames {
                return Err(invalid(format!(
                    "warp points at scene frame {last} beyond duration {}",
                    self.duration_frames
                )));
            }
        }

        for (k, w) in self.contact_windows.iter().enumerate() {
            if w[0] > w[1] {
                return Err(invalid(format!("contact window {k} has start after end")));
            }
            if w[1] >= self.duration_frames {
                return Err(invalid(format!("contact window {k} ends past the last frame")));
            }
            if k > 0 && self.contact_windows[k - 1][1] >= w[0] {
                return Err(invalid(format!("contact window {k} overlaps or precedes window {}", k - 1)));
            }
        }
        Ok(())
    }

    /// A valid random script on a 96x96 canvas: the effector wanders left of
    /// the object, jumps into contact at each window start, carries the
    /// object vertically and backs off by 12 px at the window end. Windows
    /// last at least 6 frames and are separated by at least 6 frames. The
    /// warp starts at scene frame 0 or 1, advances by 1 or 2, and ends within
    /// one frame of the last scene frame.
    pub fn random(seed: u64, duration_frames: usize) -> Result<SceneScript, SynthError> {
        if duration_frames < 40 {
            return Err(invalid("random scripts need at least 40 frames"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = SIDE as i32;
        let contact_x = OBJ_X - 1 - RADIUS;
        let far_x = contact_x - RELEASE_GAP;
        let (y_lo, y_hi) = (RADIUS + 2, h - 1 - RADIUS - 2);
        // object top keeps its center row inside the effector's range
        let (top_lo, top_hi) = (y_lo - OBJ_H as i32 / 2, y_hi - OBJ_H as i32 / 2);
        let top_lo = top_lo.max(2);
        let top_hi = top_hi.min(h - OBJ_H as i32 - 2);

        let count = (duration_frames / 60).clamp(1, 3);
        let seg = duration_frames / count;
        let mut windows = Vec::with_capacity(count);
        for k in 0..count {
            let lo = k * seg;
            let hi = if k + 1 == count { duration_frames } else { lo + seg };
            let max_len = ((hi - lo) / 3).clamp(6, 30);
            let len = rng.random_range(6..=max_len);
            let start = rng.random_range(lo + 8..=hi - 8 - len);
            windows.push([start, start + len - 1]);
        }

        let mut keys = Vec::new();
        let depth = |rng: &mut ChaCha8Rng| rng.random_range(300..=450);
        let wander = |rng: &mut ChaCha8Rng, frame: usize| PathKey {
            frame,
            x: rng.random_range(RADIUS + 2..=far_x),
            y: rng.random_range(y_lo..=y_hi),
            depth_mm: depth(rng),
        };
        let obj_y0 = rng.random_range(top_lo..=top_hi);
        let mut obj_top = obj_y0;
        keys.push(wander(&mut rng, 0));
        let mut last_frame = 0;
        for w in &windows {
            let (s, e) = (w[0], w[1]);
            // a few wander keys between the previous key and the approach
            let mut f = last_frame + rng.random_range(6..=14);
            while f + 4 < s {
                keys.push(wander(&mut rng, f));
                f += rng.random_range(6..=14);
            }
            let cy = obj_top + OBJ_H as i32 / 2;
            keys.push(PathKey { frame: s - 1, x: far_x, y: cy, depth_mm: depth(&mut rng) });
            keys.push(PathKey { frame: s, x: contact_x, y: cy, depth_mm: depth(&mut rng) });
            let new_top = rng.random_range(top_lo..=top_hi);
            let cy_end = new_top + OBJ_H as i32 / 2;
            if e > s {
                keys.push(PathKey { frame: e, x: contact_x, y: cy_end, depth_mm: depth(&mut rng) });
            }
            keys.push(PathKey { frame: e + 1, x: far_x, y: cy_end, depth_mm: depth(&mut rng) });
            obj_top = if e > s { new_top } else { obj_top };
            last_frame = e + 1;
        }
        let mut f = last_frame + rng.random_range(6..=14);
        while f < duration_frames {
            keys.push(wander(&mut rng, f));
            f += rng.random_range(6..=14);
        }

        let mut warp = vec![rng.random_range(0..=1usize)];
        loop {
            let step = if rng.random_bool(0.25) { 2 } else { 1 };
            let next = warp[warp.len() - 1] + step;
            if next >= duration_frames {
                break;
            }
            warp.push(next);
        }

        let palette = [[40, 90, 200], [200, 60, 50], [60, 170, 80], [220, 190, 40]];
        let names = ["cup", "red block", "sponge", "banana"];
        let pick = rng.random_range(0..palette.len());
        let script = SceneScript {
            seed,
            episode_id: format!("synth-{seed}"),
            task: format!("move the {}", names[pick]),
            duration_frames,
            width: SIDE,
            height: SIDE,
            frame_period_ns: DEFAULT_FRAME_PERIOD_NS,
            noise_variance: DEFAULT_NOISE_VARIANCE,
            clearance_px: DEFAULT_CLEARANCE_PX,
            effector: EffectorPath { radius: RADIUS as u32, keyframes: keys },
            object: ObjectSpec {
                name: names[pick].to_string(),
                shape: ObjectShape::Rect,
                width: OBJ_W,
                height: OBJ_H,
                color: palette[pick],
                x: OBJ_X,
                y: obj_y0,
            },
            warp,
            contact_windows: windows,
            rig: CameraRig::default(),
        };
        super::validate(&script)?;
        Ok(script)
    }
}
