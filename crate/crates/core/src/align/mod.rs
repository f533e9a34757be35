//! Temporal alignment of a hand episode and a gripper episode.
//!
//! Frames are embedded (by the built-in pixel embedder or from an external
//! `emb.jsonl`), matched by nearest-neighbor retrieval with a cycle-consistency
//! check, and the surviving pairs are made monotone. [`dtw_align`] provides a
//! monotone dynamic-programming alignment used to cross-check the retrieval.

mod dtw;
mod embed;
mod nn;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::{Episode, EpisodeError};
use crate::layout::{read_jsonl, write_jsonl};

pub use dtw::{dtw_align, DtwAlignment};
pub use embed::{embed_builtin, embed_image, EMBED_SIDE};
pub use nn::{longest_increasing_run, nn_align, squared_distance, DEFAULT_CYCLE_TOLERANCE};

#[derive(Debug, Error)]
pub enum AlignError {
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("embedding dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("non-finite embedding component in vector {0}")]
    NonFinite(usize),
    #[error("invalid alignment map: {0}")]
    InvalidMap(String),
    #[error("alignment map is empty")]
    EmptyAlignment,
    #[error(transparent)]
    Episode(#[from] EpisodeError),
}

/// One fixed-dimension vector per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence {
    vectors: Vec<Vec<f64>>,
    source_episode_id: String,
    dim: usize,
}

impl EmbeddingSequence {
    pub fn new(source_episode_id: impl Into<String>, vectors: Vec<Vec<f64>>) -> Result<Self, AlignError> {
        let dim = match vectors.first() {
            Some(v) if !v.is_empty() => v.len(),
            Some(_) => return Err(AlignError::EmptyInput("zero-dimensional embedding".into())),
            None => return Err(AlignError::EmptyInput("no embedding vectors".into())),
        };
        for (k, v) in vectors.iter().enumerate() {
            if v.len() != dim {
                return Err(AlignError::DimMismatch(dim, v.len()));
            }
            if v.iter().any(|c| !c.is_finite()) {
                return Err(AlignError::NonFinite(k));
            }
        }
        Ok(Self {
            vectors,
            source_episode_id: source_episode_id.into(),
            dim,
        })
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn source_episode_id(&self) -> &str {
        &self.source_episode_id
    }

    /// Reads `emb.jsonl`; lines must carry `idx` 0, 1, 2, ... in order.
    pub fn read_jsonl(path: &Path, source_episode_id: &str) -> Result<Self, AlignError> {
        let records: Vec<EmbeddingRecord> = read_jsonl(path)?;
        let mut vectors = Vec::with_capacity(records.len());
        for (k, r) in records.into_iter().enumerate() {
            if r.idx != k {
                return Err(AlignError::InvalidMap(format!(
                    "{}: expected idx {k}, found {}",
                    path.display(),
                    r.idx
                )));
            }
            vectors.push(r.vec);
        }
        Self::new(source_episode_id, vectors)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), AlignError> {
        let records: Vec<EmbeddingRecord> = self
            .vectors
            .iter()
            .enumerate()
            .map(|(idx, v)| EmbeddingRecord { idx, vec: v.clone() })
            .collect();
        Ok(write_jsonl(path, &records)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EmbeddingRecord {
    idx: usize,
    vec: Vec<f64>,
}

/// Hand-to-gripper frame correspondences. Hand indices are strictly
/// increasing; maps produced by [`nn_align`] are strictly increasing in the
/// gripper index as well.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentMap {
    pairs: Vec<(usize, usize)>,
    hand_len: usize,
    gripper_len: usize,
}

impl AlignmentMap {
    pub fn new(pairs: Vec<(usize, usize)>, hand_len: usize, gripper_len: usize) -> Result<Self, AlignError> {
        for (k, &(i, j)) in pairs.iter().enumerate() {
            if i >= hand_len || j >= gripper_len {
                return Err(AlignError::InvalidMap(format!(
                    "pair {k} = ({i}, {j}) outside episode bounds ({hand_len}, {gripper_len})"
                )));
            }
            if k > 0 && pairs[k - 1].0 >= i {
                return Err(AlignError::InvalidMap(format!(
                    "hand indices not strictly increasing at pair {k}"
                )));
            }
        }
        Ok(Self {
            pairs,
            hand_len,
            gripper_len,
        })
    }

    pub fn identity(len: usize) -> Self {
        Self {
            pairs: (0..len).map(|i| (i, i)).collect(),
            hand_len: len,
            gripper_len: len,
        }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Number of aligned timesteps.
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn hand_len(&self) -> usize {
        self.hand_len
    }

    pub fn gripper_len(&self) -> usize {
        self.gripper_len
    }

    pub fn is_strictly_monotone(&self) -> bool {
        self.pairs.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 < w[1].1)
    }

    pub fn to_file(&self, hand_episode: &str, gripper_episode: &str, cycle_tolerance: usize) -> AlignmentFile {
        AlignmentFile {
            hand_episode: hand_episode.to_string(),
            gripper_episode: gripper_episode.to_string(),
            cycle_tolerance,
            pairs: self.pairs.iter().map(|&(i, j)| [i, j]).collect(),
        }
    }
}

/// `alignment.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentFile {
    pub hand_episode: String,
    pub gripper_episode: String,
    pub cycle_tolerance: usize,
    pub pairs: Vec<[usize; 2]>,
}

impl AlignmentFile {
    pub fn to_map(&self, hand_len: usize, gripper_len: usize) -> Result<AlignmentMap, AlignError> {
        AlignmentMap::new(
            self.pairs.iter().map(|p| (p[0], p[1])).collect(),
            hand_len,
            gripper_len,
        )
    }
}

/// Selects the mapped frames from both episodes. Both outputs have length
/// `map.len()` and carry the hand episode's timestamps. The hand output keeps
/// the hand pose stream; the gripper output has no pose stream since its own
/// clock no longer applies.
pub fn apply_alignment(
    hand: &Episode,
    gripper: &Episode,
    map: &AlignmentMap,
) -> Result<(Episode, Episode), AlignError> {
    if map.is_empty() {
        return Err(AlignError::EmptyAlignment);
    }
    let mut hand_frames = Vec::with_capacity(map.len());
    let mut gripper_frames = Vec::with_capacity(map.len());
    for (k, &(i, j)) in map.pairs().iter().enumerate() {
        let (Some(h), Some(g)) = (hand.frames().get(i), gripper.frames().get(j)) else {
            return Err(AlignError::InvalidMap(format!(
                "pair {k} = ({i}, {j}) outside episodes of length ({}, {})",
                hand.len(),
                gripper.len()
            )));
        };
        if k > 0 && map.pairs()[k - 1].0 >= i {
            return Err(AlignError::InvalidMap(format!(
                "hand indices not strictly increasing at pair {k}"
            )));
        }
        hand_frames.push(h.clone());
        gripper_frames.push(g.restamped(h.timestamp_ns));
    }
    let aligned_hand = Episode::new(
        hand.meta().clone(),
        hand.role(),
        hand_frames,
        hand.camera_poses().to_vec(),
    )?;
    let aligned_gripper = Episode::new(gripper.meta().clone(), gripper.role(), gripper_frames, Vec::new())?;
    Ok((aligned_hand, aligned_gripper))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::{EpisodeMeta, Frame, Role};
    use image::{Rgb, RgbImage};

    fn episode(id: &str, role: Role, values: &[u8], t0: i64) -> Episode {
        let frames = values
            .iter()
            .enumerate()
            .map(|(k, &v)| Frame::new(t0 + k as i64 * 10, RgbImage::from_pixel(2, 2, Rgb([v, v, v]))))
            .collect();
        Episode::new(EpisodeMeta::new(id, "t", "cup"), role, frames, vec![]).unwrap()
    }

    #[test]
    fn identity_map_truncates_only() {
        let h = episode("h", Role::Hand, &[1, 2, 3, 4], 0);
        let g = episode("g", Role::Gripper, &[1, 2, 3], 1000);
        let (ah, ag) = apply_alignment(&h, &g, &AlignmentMap::identity(3)).unwrap();
        assert_eq!(ah.frames(), &h.frames()[..3]);
        assert_eq!(ag.role(), Role::Gripper);
        assert_eq!(ag.timestamps(), vec![0, 10, 20]);
        for (a, b) in ag.frames().iter().zip(g.frames()) {
            assert_eq!(a.image(), b.image());
        }
    }

    #[test]
    fn empty_and_out_of_bounds_maps() {
        let h = episode("h", Role::Hand, &[1, 2], 0);
        let g = episode("g", Role::Gripper, &[1, 2], 0);
        let empty = AlignmentMap::new(vec![], 2, 2).unwrap();
        assert!(matches!(apply_alignment(&h, &g, &empty), Err(AlignError::EmptyAlignment)));
        let wide = AlignmentMap::new(vec![(0, 0), (1, 4)], 2, 5).unwrap();
        assert!(matches!(apply_alignment(&h, &g, &wide), Err(AlignError::InvalidMap(_))));
        assert!(AlignmentMap::new(vec![(1, 0), (1, 1)], 2, 2).is_err());
        assert!(AlignmentMap::new(vec![(2, 0)], 2, 2).is_err());
    }

    #[test]
    fn shifted_map_selects_ground_truth_frames() {
        // gripper[j] shows hand[j + 2]
        let h = episode("h", Role::Hand, &[10, 20, 30, 40, 50, 60], 0);
        let g = episode("g", Role::Gripper, &[30, 40, 50, 60], 500);
        let map = AlignmentMap::new((2..6).map(|i| (i, i - 2)).collect(), 6, 4).unwrap();
        let (ah, ag) = apply_alignment(&h, &g, &map).unwrap();
        assert_eq!(ah.len(), 4);
        for (a, b) in ah.frames().iter().zip(ag.frames()) {
            assert_eq!(a.image(), b.image());
            assert_eq!(a.timestamp_ns, b.timestamp_ns);
        }
    }

    #[test]
    fn embedding_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let seq = EmbeddingSequence::new("e", vec![vec![0.5, -1.0], vec![1e-300, 3.25]]).unwrap();
        let path = dir.path().join("emb.jsonl");
        seq.write_jsonl(&path).unwrap();
        assert_eq!(EmbeddingSequence::read_jsonl(&path, "e").unwrap(), seq);
    }

    #[test]
    fn embedding_validation() {
        assert!(matches!(EmbeddingSequence::new("e", vec![]), Err(AlignError::EmptyInput(_))));
        assert!(matches!(
            EmbeddingSequence::new("e", vec![vec![1.0], vec![1.0, 2.0]]),
            Err(AlignError::DimMismatch(1, 2))
        ));
        assert!(matches!(
            EmbeddingSequence::new("e", vec![vec![1.0], vec![f64::NAN]]),
            Err(AlignError::NonFinite(1))
        ));
    }
}
