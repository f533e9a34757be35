use rayon::prelude::*;

use super::{AlignError, AlignmentMap, EmbeddingSequence};

/// Reverse-lookup slack, in frames, for the cycle-consistency check.
pub const DEFAULT_CYCLE_TOLERANCE: usize = 2;

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(super) fn check_dims(a: &EmbeddingSequence, b: &EmbeddingSequence) -> Result<(), AlignError> {
    if a.dim() != b.dim() {
        return Err(AlignError::DimMismatch(a.dim(), b.dim()));
    }
    if a.is_empty() || b.is_empty() {
        return Err(AlignError::EmptyInput("embedding sequence".into()));
    }
    Ok(())
}

/// Row-major `a.len() x b.len()` squared-distance matrix.
pub(super) fn distance_matrix(a: &EmbeddingSequence, b: &EmbeddingSequence) -> Vec<Vec<f64>> {
    a.vectors()
        .par_iter()
        .map(|u| b.vectors().iter().map(|v| squared_distance(u, v)).collect())
        .collect()
}

// lowest index wins ties
fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (k, v) in values.enumerate() {
        if v < best.1 {
            best = (k, v);
        }
    }
    best.0
}

/// Nearest-neighbor alignment with cycle-consistency filtering.
///
/// Each hand frame `i` retrieves its nearest gripper frame `j`; the pair is
/// kept when `j`'s own nearest hand frame lies within `cycle_tolerance` of
/// `i`. Kept pairs are reduced to their longest run that is strictly
/// increasing in the gripper index.
pub fn nn_align(
    hand: &EmbeddingSequence,
    gripper: &EmbeddingSequence,
    cycle_tolerance: usize,
) -> Result<AlignmentMap, AlignError> {
    check_dims(hand, gripper)?;
    let dist = distance_matrix(hand, gripper);
    let forward: Vec<usize> = dist.iter().map(|row| argmin(row.iter().copied())).collect();
    let backward: Vec<usize> = (0..gripper.len())
        .map(|j| argmin(dist.iter().map(|row| row[j])))
        .collect();

    let kept: Vec<(usize, usize)> = forward
        .iter()
        .enumerate()
        .filter(|&(i, &j)| backward[j].abs_diff(i) <= cycle_tolerance)
        .map(|(i, &j)| (i, j))
        .collect();

    let gripper_idx: Vec<usize> = kept.iter().map(|p| p.1).collect();
    let pairs = longest_increasing_run(&gripper_idx)
        .into_iter()
        .map(|k| kept[k])
        .collect();
    AlignmentMap::new(pairs, hand.len(), gripper.len())
}

/// Positions of a longest strictly increasing subsequence of `values`.
///
/// Patience sorting with lower-bound replacement: among equal values the
/// later element replaces the earlier one, so ties resolve toward the most
/// recent candidate.
pub fn longest_increasing_run(values: &[usize]) -> Vec<usize> {
    let mut tails: Vec<usize> = Vec::new();
    let mut prev: Vec<Option<usize>> = vec![None; values.len()];
    for (k, &v) in values.iter().enumerate() {
        let pos = tails.partition_point(|&t| values[t] < v);
        if pos > 0 {
            prev[k] = Some(tails[pos - 1]);
        }
        if pos == tails.len() {
            tails.push(k);
        } else {
            tails[pos] = k;
        }
    }
    let mut out = Vec::with_capacity(tails.len());
    let mut cur = tails.last().copied();
    while let Some(k) = cur {
        out.push(k);
        cur = prev[k];
    }
    out.reverse();
    out
}
