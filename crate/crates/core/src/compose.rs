//! Ground-truth gripper frame synthesis: the hand frame's background with the
//! effector region filled in, and the gripper frame's foreground pasted on top.

use image::RgbImage;
use rayon::prelude::*;
use thiserror::Error;

use crate::episode::{mask_names, Episode, EpisodeError, Frame, Role};
use crate::raster::Mask;
use crate::stage::{StageLabel, StageTrack};

pub const DEFAULT_INPAINT_ITERS: usize = 10_000;

#[derive(Debug, Error)]
pub enum ComposeError {
    #[error("dimension mismatch: {0:?} vs {1:?}")]
    DimMismatch((u32, u32), (u32, u32)),
    #[error("frame has no '{0}' mask")]
    MissingMask(String),
    #[error("hole covers the whole image; nothing to fill from")]
    NothingToAnchor,
    #[error("frame {index}: {source}")]
    AtFrame {
        index: usize,
        #[source]
        source: Box<ComposeError>,
    },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
}

/// A synthesized gripper frame with provenance. `fg_mask` marks pixels copied
/// from the gripper frame, `inpaint_mask` marks filled pixels; everything
/// else is the hand frame unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeFrame {
    pub image: RgbImage,
    pub fg_mask: Mask,
    pub inpaint_mask: Mask,
    pub source_hand_idx: usize,
    pub source_gripper_idx: usize,
}

impl CompositeFrame {
    /// Frame carrying the composite image with `composite_fg` and `inpaint`
    /// masks.
    pub fn to_frame(&self, timestamp_ns: i64) -> Result<Frame, EpisodeError> {
        Frame::new(timestamp_ns, self.image.clone())
            .with_mask(mask_names::COMPOSITE_FG, self.fg_mask.clone())?
            .with_mask(mask_names::INPAINT, self.inpaint_mask.clone())
    }
}

fn require<'a>(frame: &'a Frame, name: &str) -> Result<&'a Mask, ComposeError> {
    frame
        .mask(name)
        .ok_or_else(|| ComposeError::MissingMask(name.to_string()))
}

/// Foreground of a gripper frame: the gripper alone when not interacting,
/// gripper and object during interaction.
pub fn foreground_mask(frame: &Frame, stage: StageLabel) -> Result<Mask, ComposeError> {
    let gripper = require(frame, mask_names::GRIPPER)?;
    match stage {
        StageLabel::NonInteractive => Ok(gripper.clone()),
        StageLabel::Interactive => Ok(gripper.union(require(frame, mask_names::OBJECT)?)),
    }
}

/// Neighbor-mean diffusion fill. Each pass assigns every hole pixel that has
/// at least one known 4-neighbor the rounded mean of those neighbors; the
/// newly filled pixels become known for the next pass. Pixels outside the
/// hole are never modified.
pub fn inpaint(image: &RgbImage, hole: &Mask, max_iters: usize) -> Result<RgbImage, ComposeError> {
    inpaint_excluding(image, hole, None, max_iters)
}

/// Like [`inpaint`], but pixels in `excluded` are neither filled nor used as
/// sources.
pub fn inpaint_excluding(
    image: &RgbImage,
    hole: &Mask,
    excluded: Option<&Mask>,
    max_iters: usize,
) -> Result<RgbImage, ComposeError> {
    if hole.dimensions() != image.dimensions() {
        return Err(ComposeError::DimMismatch(hole.dimensions(), image.dimensions()));
    }
    if let Some(ex) = excluded {
        if ex.dimensions() != image.dimensions() {
            return Err(ComposeError::DimMismatch(ex.dimensions(), image.dimensions()));
        }
    }
    let mut out = image.clone();
    if hole.is_empty() {
        return Ok(out);
    }
    let (w, h) = image.dimensions();
    let idx = |x: u32, y: u32| y as usize * w as usize + x as usize;
    let excluded_at = |x: u32, y: u32| excluded.is_some_and(|m| m.get(x, y));

    let mut known: Vec<bool> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| !hole.get(x, y) && !excluded_at(x, y))
        .collect();
    if !known.iter().any(|&k| k) {
        return Err(ComposeError::NothingToAnchor);
    }
    let mut pending: Vec<(u32, u32)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| hole.get(x, y) && !excluded_at(x, y))
        .collect();

    for _ in 0..max_iters {
        if pending.is_empty() {
            break;
        }
        let mut filled = Vec::new();
        let mut rest = Vec::with_capacity(pending.len());
        for &(x, y) in &pending {
            let mut sum = [0u32; 3];
            let mut n = 0u32;
            let neighbors = [
                (x.wrapping_sub(1), y),
                (x + 1, y),
                (x, y.wrapping_sub(1)),
                (x, y + 1),
            ];
            for (nx, ny) in neighbors {
                if nx < w && ny < h && known[idx(nx, ny)] {
                    let p = out.get_pixel(nx, ny).0;
                    for c in 0..3 {
                        sum[c] += p[c] as u32;
                    }
                    n += 1;
                }
            }
            if n == 0 {
                rest.push((x, y));
            } else {
                let v = sum.map(|s| ((s + n / 2) / n) as u8);
                filled.push((x, y, v));
            }
        }
        if filled.is_empty() {
            // remaining pixels are cut off from every source
            break;
        }
        for (x, y, v) in filled {
            out.put_pixel(x, y, image::Rgb(v));
            known[idx(x, y)] = true;
        }
        pending = rest;
    }
    Ok(out)
}

/// Builds the composite for one aligned pair.
///
/// The hole in the hand frame is the hand mask, plus the hand-frame object
/// mask when interacting (the object is re-pasted from the gripper frame).
/// Hole pixels not covered by the gripper foreground are inpainted; hole
/// pixels under the foreground are not used as fill sources.
pub fn composite(
    hand: &Frame,
    gripper: &Frame,
    stage: StageLabel,
    sources: (usize, usize),
    max_iters: usize,
) -> Result<CompositeFrame, ComposeError> {
    if hand.dimensions() != gripper.dimensions() {
        return Err(ComposeError::DimMismatch(hand.dimensions(), gripper.dimensions()));
    }
    let hand_mask = require(hand, mask_names::HAND)?;
    let hole = match stage {
        StageLabel::NonInteractive => hand_mask.clone(),
        StageLabel::Interactive => hand_mask.union(require(hand, mask_names::OBJECT)?),
    };
    let fg = foreground_mask(gripper, stage)?;
    let inpaint_mask = hole.difference(&fg);
    let covered = hole.intersection(&fg);

    let mut image = inpaint_excluding(hand.image(), &inpaint_mask, Some(&covered), max_iters)?;
    for (x, y, p) in image.enumerate_pixels_mut() {
        if fg.get(x, y) {
            *p = *gripper.image().get_pixel(x, y);
        }
    }
    Ok(CompositeFrame {
        image,
        fg_mask: fg,
        inpaint_mask,
        source_hand_idx: sources.0,
        source_gripper_idx: sources.1,
    })
}

/// Composites every frame of an aligned episode pair. `sources` gives the
/// original hand/gripper indices recorded in each [`CompositeFrame`]. The
/// returned episode has role `Composited`, the hand episode's timestamps and
/// pose stream.
pub fn composite_episode(
    hand: &Episode,
    gripper: &Episode,
    track: &StageTrack,
    sources: &[(usize, usize)],
    max_iters: usize,
) -> Result<(Episode, Vec<CompositeFrame>), ComposeError> {
    if hand.len() != gripper.len() || hand.len() != track.len() || hand.len() != sources.len() {
        return Err(ComposeError::LengthMismatch(format!(
            "hand {}, gripper {}, stages {}, sources {}",
            hand.len(),
            gripper.len(),
            track.len(),
            sources.len()
        )));
    }
    let composites = hand
        .frames()
        .par_iter()
        .zip(gripper.frames().par_iter())
        .zip(track.labels().par_iter())
        .zip(sources.par_iter())
        .enumerate()
        .map(|(index, (((h, g), &stage), &src))| {
            composite(h, g, stage, src, max_iters).map_err(|e| ComposeError::AtFrame {
                index,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let frames = composites
        .iter()
        .zip(hand.frames())
        .map(|(c, h)| c.to_frame(h.timestamp_ns))
        .collect::<Result<Vec<_>, _>>()?;
    let episode = Episode::new(
        hand.meta().clone(),
        Role::Composited,
        frames,
        hand.camera_poses().to_vec(),
    )?;
    Ok((episode, composites))
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    fn blank(w: u32, h: u32, v: u8) -> RgbImage {
        RgbImage::from_pixel(w, h, Rgb([v, v, v]))
    }

    fn square(w: u32, h: u32, x0: u32, y0: u32, s: u32) -> Mask {
        Mask::from_fn(w, h, |x, y| x >= x0 && x < x0 + s && y >= y0 && y < y0 + s)
    }

    // Straightforward re-implementation of the fill rule, one pass at a time
    // over a full copy of the image.
    fn reference_fill(img: &RgbImage, hole: &Mask) -> RgbImage {
        let (w, h) = img.dimensions();
        let mut cur = img.clone();
        let mut unknown = hole.clone();
        while !unknown.is_empty() {
            let snapshot = cur.clone();
            let before = unknown.clone();
            for y in 0..h {
                for x in 0..w {
                    if !before.get(x, y) {
                        continue;
                    }
                    let mut vals = vec![];
                    for (dx, dy) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64 && !before.get(nx as u32, ny as u32) {
                            vals.push(snapshot.get_pixel(nx as u32, ny as u32).0);
                        }
                    }
                    if !vals.is_empty() {
                        let n = vals.len() as u32;
                        let mut p = [0u8; 3];
                        for c in 0..3 {
                            let s: u32 = vals.iter().map(|v| v[c] as u32).sum();
                            p[c] = ((s + n / 2) / n) as u8;
                        }
                        cur.put_pixel(x, y, Rgb(p));
                        unknown.set(x, y, false);
                    }
                }
            }
        }
        cur
    }

    #[test]
    fn empty_hole_is_identity() {
        let img = RgbImage::from_fn(9, 7, |x, y| Rgb([x as u8, y as u8, 3]));
        assert_eq!(inpaint(&img, &Mask::empty(9, 7), 10).unwrap(), img);
    }

    #[test]
    fn single_pixel_in_constant_image() {
        let mut img = blank(5, 5, 77);
        img.put_pixel(2, 2, Rgb([0, 255, 0]));
        let hole = Mask::from_fn(5, 5, |x, y| x == 2 && y == 2);
        assert_eq!(inpaint(&img, &hole, 10).unwrap(), blank(5, 5, 77));
    }

    #[test]
    fn gradient_hole_matches_reference_and_continuation() {
        let img = RgbImage::from_fn(24, 12, |x, _| {
            let v = (x * 8) as u8;
            Rgb([v, v, v])
        });
        let mut holed = img.clone();
        let hole = square(24, 12, 10, 4, 3);
        for y in 4..7 {
            for x in 10..13 {
                holed.put_pixel(x, y, Rgb([255, 0, 0]));
            }
        }
        let out = inpaint(&holed, &hole, DEFAULT_INPAINT_ITERS).unwrap();
        assert_eq!(out, reference_fill(&holed, &hole));
        for y in 0..12 {
            for x in 0..24 {
                let want = img.get_pixel(x, y).0[0] as i32;
                let got = out.get_pixel(x, y).0[0] as i32;
                assert!((want - got).abs() <= 8, "({x},{y}) {got} vs {want}");
                if !hole.get(x, y) {
                    assert_eq!(out.get_pixel(x, y), holed.get_pixel(x, y));
                }
            }
        }
    }

    #[test]
    fn full_hole_has_no_anchor() {
        let img = blank(4, 4, 1);
        assert!(matches!(
            inpaint(&img, &Mask::full(4, 4), 10),
            Err(ComposeError::NothingToAnchor)
        ));
    }

    #[test]
    fn max_iters_bounds_the_fill() {
        let img = blank(9, 1, 50);
        let hole = Mask::from_fn(9, 1, |x, _| x > 0);
        let mut holed = img.clone();
        for x in 1..9 {
            holed.put_pixel(x, 0, Rgb([0, 0, 0]));
        }
        let out = inpaint(&holed, &hole, 3).unwrap();
        let row: Vec<u8> = (0..9).map(|x| out.get_pixel(x, 0).0[0]).collect();
        assert_eq!(row, vec![50, 50, 50, 50, 0, 0, 0, 0, 0]);
    }

    fn frame(img: RgbImage, masks: &[(&str, Mask)]) -> Frame {
        let mut f = Frame::new(0, img);
        for (n, m) in masks {
            f.insert_mask(n, m.clone()).unwrap();
        }
        f
    }

    #[test]
    fn foreground_by_stage() {
        let g = square(16, 16, 2, 2, 4);
        let o = square(16, 16, 10, 10, 3);
        let f = frame(blank(16, 16, 0), &[("gripper", g.clone()), ("object", o.clone())]);
        assert_eq!(foreground_mask(&f, StageLabel::NonInteractive).unwrap(), g);
        assert_eq!(foreground_mask(&f, StageLabel::Interactive).unwrap().count(), 16 + 9);

        let overlap = square(16, 16, 4, 4, 4);
        let f = frame(blank(16, 16, 0), &[("gripper", g.clone()), ("object", overlap.clone())]);
        let u = foreground_mask(&f, StageLabel::Interactive).unwrap();
        assert_eq!(u.count(), 16 + 16 - g.intersection_count(&overlap));

        let f = frame(blank(16, 16, 0), &[("gripper", g)]);
        assert!(foreground_mask(&f, StageLabel::NonInteractive).is_ok());
        assert!(matches!(
            foreground_mask(&f, StageLabel::Interactive),
            Err(ComposeError::MissingMask(m)) if m == "object"
        ));
    }

    #[test]
    fn empty_masks_return_hand_image() {
        let hand_img = RgbImage::from_fn(16, 16, |x, y| Rgb([x as u8 * 9, y as u8 * 9, 1]));
        let hand = frame(hand_img.clone(), &[("hand", Mask::empty(16, 16))]);
        let gripper = frame(blank(16, 16, 200), &[("gripper", Mask::empty(16, 16))]);
        let c = composite(&hand, &gripper, StageLabel::NonInteractive, (0, 0), 100).unwrap();
        assert_eq!(c.image, hand_img);
        assert!(c.inpaint_mask.is_empty());
    }

    #[test]
    fn foreground_covering_hole() {
        let hand_img = RgbImage::from_fn(16, 16, |x, y| Rgb([x as u8 * 9, y as u8 * 9, 1]));
        let gripper_img = blank(16, 16, 200);
        let hole = square(16, 16, 5, 5, 3);
        let fg = square(16, 16, 4, 4, 6);
        let hand = frame(hand_img.clone(), &[("hand", hole.clone())]);
        let gripper = frame(gripper_img.clone(), &[("gripper", fg.clone())]);
        let c = composite(&hand, &gripper, StageLabel::NonInteractive, (3, 4), 100).unwrap();
        assert!(c.inpaint_mask.is_empty());
        assert_eq!((c.source_hand_idx, c.source_gripper_idx), (3, 4));
        for (x, y, p) in c.image.enumerate_pixels() {
            if fg.get(x, y) {
                assert_eq!(p, gripper_img.get_pixel(x, y));
            } else {
                assert_eq!(p, hand_img.get_pixel(x, y));
            }
        }
    }

    #[test]
    fn interactive_holes_hand_object() {
        let hand_img = blank(16, 16, 90);
        let hand = frame(
            hand_img,
            &[("hand", square(16, 16, 1, 1, 3)), ("object", square(16, 16, 8, 8, 4))],
        );
        let gripper = frame(
            blank(16, 16, 10),
            &[("gripper", square(16, 16, 1, 1, 2)), ("object", square(16, 16, 9, 9, 4))],
        );
        let c = composite(&hand, &gripper, StageLabel::Interactive, (0, 0), 100).unwrap();
        // hand 9 + object 16, minus the 4 + 9 pixels covered by the gripper foreground
        assert_eq!(c.inpaint_mask.count(), 9 + 16 - 4 - 9);
        assert!(c.fg_mask.intersection(&c.inpaint_mask).is_empty());
        assert!(matches!(
            composite(&hand, &gripper, StageLabel::Interactive, (0, 0), 100).map(|c| c.image.get_pixel(8, 8).0),
            Ok([90, 90, 90])
        ));
    }

    #[test]
    fn composite_errors() {
        let hand = frame(blank(8, 8, 0), &[]);
        let gripper = frame(blank(8, 8, 0), &[("gripper", Mask::empty(8, 8))]);
        assert!(matches!(
            composite(&hand, &gripper, StageLabel::NonInteractive, (0, 0), 10),
            Err(ComposeError::MissingMask(m)) if m == "hand"
        ));
        let small = frame(blank(4, 8, 0), &[]);
        assert!(matches!(
            composite(&small, &gripper, StageLabel::NonInteractive, (0, 0), 10),
            Err(ComposeError::DimMismatch(..))
        ));
    }
}
