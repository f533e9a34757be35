//! Interactive / non-interactive stage labels from mask geometry, and the
//! binary gripper status derived from them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::Mask;

pub const DEFAULT_DILATION_PX: u32 = 5;
pub const DEFAULT_MIN_OVERLAP_PX: usize = 1;
pub const DEFAULT_HYSTERESIS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StageError {
    #[error("mask dimensions differ: effector {effector:?}, object {object:?}")]
    DimMismatch {
        effector: (u32, u32),
        object: (u32, u32),
    },
    #[error("effector mask is empty")]
    MissingEffector,
    #[error("frame {index}: {source}")]
    AtFrame {
        index: usize,
        #[source]
        source: Box<StageError>,
    },
    #[error("empty frame sequence")]
    EmptyTrack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageLabel {
    Interactive,
    NonInteractive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GripperState {
    Open,
    Closed,
}

/// Thresholds for the contact test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StageParams {
    pub dilation_px: u32,
    pub min_overlap_px: usize,
    pub hysteresis: usize,
}

impl Default for StageParams {
    fn default() -> Self {
        Self {
            dilation_px: DEFAULT_DILATION_PX,
            min_overlap_px: DEFAULT_MIN_OVERLAP_PX,
            hysteresis: DEFAULT_HYSTERESIS,
        }
    }
}

/// Per-frame labels plus the inclusive `(start, end)` index ranges of the
/// interactive runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageTrack {
    labels: Vec<StageLabel>,
    contact_events: Vec<(usize, usize)>,
}

impl StageTrack {
    pub fn from_labels(labels: Vec<StageLabel>) -> Self {
        let contact_events = runs(&labels)
            .into_iter()
            .filter(|r| r.label == StageLabel::Interactive)
            .map(|r| (r.start, r.start + r.len - 1))
            .collect();
        Self {
            labels,
            contact_events,
        }
    }

    pub fn labels(&self) -> &[StageLabel] {
        &self.labels
    }

    pub fn contact_events(&self) -> &[(usize, usize)] {
        &self.contact_events
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Interactive when the effector mask, dilated by a square of half-width
/// `dilation_px`, overlaps the object mask in at least `min_overlap_px`
/// pixels.
pub fn classify_frame(
    effector: &Mask,
    object: &Mask,
    dilation_px: u32,
    min_overlap_px: usize,
) -> Result<StageLabel, StageError> {
    if effector.dimensions() != object.dimensions() {
        return Err(StageError::DimMismatch {
            effector: effector.dimensions(),
            object: object.dimensions(),
        });
    }
    if effector.is_empty() {
        return Err(StageError::MissingEffector);
    }
    let overlap = effector.dilate(dilation_px).intersection_count(object);
    Ok(if overlap >= min_overlap_px {
        StageLabel::Interactive
    } else {
        StageLabel::NonInteractive
    })
}

/// Classifies every frame, then removes interior runs shorter than
/// `params.hysteresis` frames.
pub fn classify_track(frames: &[(&Mask, &Mask)], params: &StageParams) -> Result<StageTrack, StageError> {
    if frames.is_empty() {
        return Err(StageError::EmptyTrack);
    }
    let raw = frames
        .par_iter()
        .enumerate()
        .map(|(index, (eff, obj))| {
            classify_frame(eff, obj, params.dilation_px, params.min_overlap_px).map_err(|e| {
                StageError::AtFrame {
                    index,
                    source: Box::new(e),
                }
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(StageTrack::from_labels(smooth_labels(&raw, params.hysteresis)))
}

#[derive(Debug, Clone, Copy)]
struct Run {
    label: StageLabel,
    start: usize,
    len: usize,
}

fn runs(labels: &[StageLabel]) -> Vec<Run> {
    let mut out: Vec<Run> = Vec::new();
    for (k, &label) in labels.iter().enumerate() {
        match out.last_mut() {
            Some(r) if r.label == label => r.len += 1,
            _ => out.push(Run { label, start: k, len: 1 }),
        }
    }
    out
}

fn flip(label: StageLabel) -> StageLabel {
    match label {
        StageLabel::Interactive => StageLabel::NonInteractive,
        StageLabel::NonInteractive => StageLabel::Interactive,
    }
}

/// Hysteresis filter. Scanning left to right, an interior run (one with
/// neighbors on both sides) shorter than `hysteresis` takes its neighbors'
/// label and merges with them; the merged run is re-examined before moving
/// on. Runs touching either end of the sequence are kept as they are. The
/// output is a fixed point of the filter.
pub fn smooth_labels(labels: &[StageLabel], hysteresis: usize) -> Vec<StageLabel> {
    let mut rs = runs(labels);
    let mut k = 1;
    while k + 1 < rs.len() {
        if rs[k].len < hysteresis {
            let merged = Run {
                label: flip(rs[k].label),
                start: rs[k - 1].start,
                len: rs[k - 1].len + rs[k].len + rs[k + 1].len,
            };
            rs.splice(k - 1..=k + 1, [merged]);
            // the merged run now sits at k - 1; recheck it if it is interior
            k = (k - 1).max(1);
        } else {
            k += 1;
        }
    }
    rs.iter()
        .flat_map(|r| std::iter::repeat_n(r.label, r.len))
        .collect()
}

/// Closed exactly where the track is interactive.
pub fn gripper_status(track: &StageTrack) -> Vec<GripperState> {
    track
        .labels()
        .iter()
        .map(|l| match l {
            StageLabel::Interactive => GripperState::Closed,
            StageLabel::NonInteractive => GripperState::Open,
        })
        .collect()
}

/// One line of `stages.jsonl`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub idx: usize,
    pub stage: StageLabel,
    pub gripper: GripperState,
}

pub fn stage_records(track: &StageTrack) -> Vec<StageRecord> {
    track
        .labels()
        .iter()
        .zip(gripper_status(track))
        .enumerate()
        .map(|(idx, (&stage, gripper))| StageRecord { idx, stage, gripper })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use StageLabel::{Interactive as I, NonInteractive as N};

    fn rect(w: u32, h: u32, x0: u32, x1: u32) -> Mask {
        Mask::from_fn(w, h, |x, y| (x0..x1).contains(&x) && (4..8).contains(&y))
    }

    #[test]
    fn disjoint_and_identical() {
        let a = rect(40, 12, 0, 5);
        let b = rect(40, 12, 20, 25);
        assert_eq!(classify_frame(&a, &b, 5, 1).unwrap(), N);
        assert_eq!(classify_frame(&a, &a, 5, 1).unwrap(), I);
    }

    #[test]
    fn one_pixel_gap() {
        // effector covers x in [0,5), object starts at x = 6
        let a = rect(20, 12, 0, 5);
        let b = rect(20, 12, 6, 10);
        assert_eq!(a.intersection_count(&b), 0);
        assert_eq!(classify_frame(&a, &b, 5, 1).unwrap(), I);
        assert_eq!(classify_frame(&a, &b, 2, 1).unwrap(), I);
        assert_eq!(classify_frame(&a, &b, 1, 1).unwrap(), N);
        assert_eq!(classify_frame(&a, &b, 0, 1).unwrap(), N);
        // dilation 5 reaches x = 9, covering object columns 6..=9: 4 cols x 4 rows
        assert_eq!(classify_frame(&a, &b, 5, 16).unwrap(), I);
        assert_eq!(classify_frame(&a, &b, 5, 17).unwrap(), N);
    }

    #[test]
    fn frame_errors() {
        let a = rect(20, 12, 0, 5);
        assert_eq!(
            classify_frame(&a, &Mask::empty(10, 12), 5, 1),
            Err(StageError::DimMismatch {
                effector: (20, 12),
                object: (10, 12)
            })
        );
        assert_eq!(
            classify_frame(&Mask::empty(20, 12), &a, 5, 1),
            Err(StageError::MissingEffector)
        );
        let empty = Mask::empty(20, 12);
        let err = classify_track(&[(&a, &a), (&empty, &a)], &StageParams::default()).unwrap_err();
        assert!(matches!(err, StageError::AtFrame { index: 1, .. }));
        assert_eq!(classify_track(&[], &StageParams::default()), Err(StageError::EmptyTrack));
    }

    #[test]
    fn flicker_is_suppressed() {
        assert_eq!(smooth_labels(&[N, N, I, N, N], 3), vec![N; 5]);
        let kept = smooth_labels(&[N, I, I, I, N], 3);
        assert_eq!(kept, vec![N, I, I, I, N]);
        let track = StageTrack::from_labels(kept);
        assert_eq!(track.contact_events(), &[(1, 3)]);
    }

    #[test]
    fn merged_runs_are_rechecked() {
        // I,N,I in the middle are all short; the merged run is still short
        let labels = [N, N, N, I, N, I, N, N, N];
        assert_eq!(smooth_labels(&labels, 3), vec![N; 9]);
        let labels = [I, I, I, N, I, N, I, I, I];
        assert_eq!(smooth_labels(&labels, 3), vec![I; 9]);
        assert_eq!(smooth_labels(&[N, I, N], 0), vec![N, I, N]);
    }

    #[test]
    fn all_disjoint_track() {
        let a = rect(40, 12, 0, 5);
        let b = rect(40, 12, 20, 25);
        let frames = vec![(&a, &b); 6];
        let track = classify_track(&frames, &StageParams::default()).unwrap();
        assert_eq!(track.labels(), &[N; 6]);
        assert!(track.contact_events().is_empty());
        assert_eq!(gripper_status(&track), vec![GripperState::Open; 6]);
    }

    #[test]
    fn all_interactive_is_closed() {
        let track = StageTrack::from_labels(vec![I; 4]);
        assert_eq!(gripper_status(&track), vec![GripperState::Closed; 4]);
        assert_eq!(track.contact_events(), &[(0, 3)]);
    }

    #[test]
    fn status_flips_at_event_boundaries() {
        let track = StageTrack::from_labels(vec![N, N, N, I, I, I, I, N, N, N, I, I, I]);
        assert_eq!(track.contact_events(), &[(3, 6), (10, 12)]);
        let status = gripper_status(&track);
        let flips: Vec<usize> = (1..status.len()).filter(|&k| status[k] != status[k - 1]).collect();
        assert_eq!(flips, vec![3, 7, 10]);
    }

    #[test]
    fn records_serialize_as_documented() {
        let track = StageTrack::from_labels(vec![N, I]);
        let lines: Vec<String> = stage_records(&track)
            .iter()
            .map(|r| serde_json::to_string(r).unwrap())
            .collect();
        assert_eq!(lines[0], r#"{"idx":0,"stage":"non_interactive","gripper":"open"}"#);
        assert_eq!(lines[1], r#"{"idx":1,"stage":"interactive","gripper":"closed"}"#);
    }
}
