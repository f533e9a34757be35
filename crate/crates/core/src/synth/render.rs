//! Integer-only rasterization. Every pixel value is a function of the seed,
//! the scene frame and the pixel coordinates; no floating point is involved.

use image::{Rgb, RgbImage};

use super::script::{ObjectShape, SceneScript};
use crate::raster::Mask;

// similar luma, so the two streams differ mostly in shape
pub const HAND_COLOR: [u8; 3] = [170, 120, 95];
pub const GRIPPER_COLOR: [u8; 3] = [120, 122, 130];

const BG_TAG: u64 = 0x6267;
const NOISE_TAG: u64 = 0x6e6f;
const KNOT_SPACING: i64 = 8;
/// Background scroll speed in pixels per scene frame.
pub const SCROLL_PX: i64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Effector {
    Hand,
    Gripper,
}

/// Sprite positions at one scene frame: effector center and object top-left.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placement {
    pub effector: (i32, i32),
    pub object: (i32, i32),
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn hash(parts: &[u64]) -> u64 {
    parts.iter().fold(0, |h, &p| mix(h ^ p))
}

/// Sum of `variance` independent +-1 coin flips for one pixel channel.
pub fn noise(seed: u64, frame: usize, x: u32, y: u32, channel: usize, variance: u32) -> i32 {
    if variance == 0 {
        return 0;
    }
    let bits = hash(&[seed, NOISE_TAG, frame as u64, x as u64, y as u64, channel as u64]);
    let heads = (bits & ((1u64 << variance) - 1)).count_ones() as i32;
    2 * heads - variance as i32
}

fn knot(seed: u64, ku: i64, kv: i64) -> i64 {
    40 + (hash(&[seed, BG_TAG, ku as u64, kv as u64]) % 161) as i64
}

/// Noise-free background: a bilinear hash texture on an 8 px lattice,
/// scrolling left by [`SCROLL_PX`] pixels per frame.
pub fn background(seed: u64, frame: usize, x: u32, y: u32) -> [u8; 3] {
    let u = x as i64 + SCROLL_PX * frame as i64;
    let (ku, ru) = (u.div_euclid(KNOT_SPACING), u.rem_euclid(KNOT_SPACING));
    let (kv, rv) = (y as i64 / KNOT_SPACING, y as i64 % KNOT_SPACING);
    let s = KNOT_SPACING;
    let sum = knot(seed, ku, kv) * (s - ru) * (s - rv)
        + knot(seed, ku + 1, kv) * ru * (s - rv)
        + knot(seed, ku, kv + 1) * (s - ru) * rv
        + knot(seed, ku + 1, kv + 1) * ru * rv;
    let v = sum / (s * s);
    [v as u8, (v * 3 / 4 + 30) as u8, (v / 2 + 50) as u8]
}

fn lerp_floor(a: i32, b: i32, num: i64, den: i64) -> i32 {
    (a as i64 + ((b - a) as i64 * num).div_euclid(den)) as i32
}

/// Effector center at a scene frame (integer interpolation of the keys).
pub fn effector_center(script: &SceneScript, frame: usize) -> (i32, i32) {
    let keys = &script.effector.keyframes;
    let k = keys.partition_point(|key| key.frame <= frame);
    if k == keys.len() {
        let last = keys[keys.len() - 1];
        return (last.x, last.y);
    }
    // keys[0].frame == 0, so k >= 1 here
    let (a, b) = (keys[k - 1], keys[k]);
    let num = (frame - a.frame) as i64;
    let den = (b.frame - a.frame) as i64;
    (lerp_floor(a.x, b.x, num, den), lerp_floor(a.y, b.y, num, den))
}

/// Placements for every scene frame. The object rests until a contact
/// window starts, then moves rigidly with the effector until the window ends.
pub fn placements(script: &SceneScript) -> Vec<Placement> {
    let mut object = (script.object.x, script.object.y);
    let mut anchor = ((0, 0), (0, 0));
    (0..script.duration_frames)
        .map(|t| {
            let effector = effector_center(script, t);
            if let Some(w) = script.contact_windows.iter().find(|w| w[0] <= t && t <= w[1]) {
                if w[0] == t {
                    anchor = (effector, object);
                }
                let (e0, o0) = anchor;
                object = (o0.0 + effector.0 - e0.0, o0.1 + effector.1 - e0.1);
            }
            Placement { effector, object }
        })
        .collect()
}

fn in_disc(dx: i32, dy: i32, r: i32) -> bool {
    dx * dx + dy * dy <= r * r
}

fn in_glyph(dx: i32, dy: i32, r: i32) -> bool {
    let half = r / 2;
    let finger = (dy - (-half)).abs() <= 1 || (dy - half).abs() <= 1;
    let fingers = finger && dx >= -half && dx <= r;
    let palm = (-half - 2..=-half).contains(&dx) && (-half - 1..=half + 1).contains(&dy);
    let stem = (-r..=-half - 3).contains(&dx) && dy.abs() <= 1;
    fingers || palm || stem
}

/// Effector sprite mask centered at `center`. The hand is a disc of radius
/// `r`; the gripper is a two-finger glyph with the same rightmost column.
pub fn effector_mask(kind: Effector, center: (i32, i32), r: u32, width: u32, height: u32) -> Mask {
    let r = r as i32;
    Mask::from_fn(width, height, |x, y| {
        let (dx, dy) = (x as i32 - center.0, y as i32 - center.1);
        match kind {
            Effector::Hand => in_disc(dx, dy, r),
            Effector::Gripper => in_glyph(dx, dy, r),
        }
    })
}

pub fn object_mask(script: &SceneScript, top_left: (i32, i32)) -> Mask {
    let o = &script.object;
    let (w, h) = (o.width as i64, o.height as i64);
    Mask::from_fn(script.width, script.height, |x, y| {
        let lx = x as i64 - top_left.0 as i64;
        let ly = y as i64 - top_left.1 as i64;
        if lx < 0 || ly < 0 || lx >= w || ly >= h {
            return false;
        }
        match o.shape {
            ObjectShape::Rect => true,
            ObjectShape::Ellipse => {
                // doubled coordinates keep the center on the half-pixel grid
                let ex = 2 * lx + 1 - w;
                let ey = 2 * ly + 1 - h;
                ex * ex * h * h + ey * ey * w * w <= w * w * h * h
            }
        }
    })
}

/// One rendered frame together with the masks produced in the same pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub image: RgbImage,
    pub effector: Mask,
    pub object: Mask,
}

/// Renders scene frame `frame` with the given effector sprite. Layers, back
/// to front: background, object, effector; then per-channel noise.
pub fn render_frame(script: &SceneScript, placement: &Placement, frame: usize, kind: Effector) -> Rendered {
    let (w, h) = (script.width, script.height);
    let effector = effector_mask(kind, placement.effector, script.effector.radius, w, h);
    let object = object_mask(script, placement.object);
    let color = match kind {
        Effector::Hand => HAND_COLOR,
        Effector::Gripper => GRIPPER_COLOR,
    };
    let image = RgbImage::from_fn(w, h, |x, y| {
        let base = if effector.get(x, y) {
            color
        } else if object.get(x, y) {
            script.object.color
        } else {
            background(script.seed, frame, x, y)
        };
        let mut px = [0u8; 3];
        for c in 0..3 {
            let v = base[c] as i32 + noise(script.seed, frame, x, y, c, script.noise_variance);
            px[c] = v.clamp(0, 255) as u8;
        }
        Rgb(px)
    });
    Rendered { image, effector, object }
}
