use super::nn::{check_dims, distance_matrix};
use super::{AlignError, AlignmentMap, EmbeddingSequence};

/// Result of [`dtw_align`]: the deduplicated map plus the full warping path
/// and its accumulated cost.
#[derive(Debug, Clone, PartialEq)]
pub struct DtwAlignment {
    pub map: AlignmentMap,
    pub path: Vec<(usize, usize)>,
    pub cost: f64,
}

/// Classic dynamic time warping under squared-Euclidean local cost.
///
/// Steps are `(1,1)`, `(1,0)` and `(0,1)`; the path runs from `(0,0)` to
/// `(n-1,m-1)`. Backtracking prefers the diagonal, then a hand step, then a
/// gripper step. The returned map keeps one gripper index per hand index: the
/// cell with the lowest local cost, ties to the lowest gripper index.
pub fn dtw_align(hand: &EmbeddingSequence, gripper: &EmbeddingSequence) -> Result<DtwAlignment, AlignError> {
    check_dims(hand, gripper)?;
    let local = distance_matrix(hand, gripper);
    let (n, m) = (hand.len(), gripper.len());

    let mut acc = vec![vec![f64::INFINITY; m]; n];
    for i in 0..n {
        for j in 0..m {
            let best_prev = if i == 0 && j == 0 {
                0.0
            } else {
                let diag = if i > 0 && j > 0 { acc[i - 1][j - 1] } else { f64::INFINITY };
                let up = if i > 0 { acc[i - 1][j] } else { f64::INFINITY };
                let left = if j > 0 { acc[i][j - 1] } else { f64::INFINITY };
                diag.min(up).min(left)
            };
            acc[i][j] = local[i][j] + best_prev;
        }
    }

    let mut path = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while i > 0 || j > 0 {
        (i, j) = if i == 0 {
            (0, j - 1)
        } else if j == 0 {
            (i - 1, 0)
        } else {
            let diag = acc[i - 1][j - 1];
            let up = acc[i - 1][j];
            let left = acc[i][j - 1];
            if diag <= up && diag <= left {
                (i - 1, j - 1)
            } else if up <= left {
                (i - 1, j)
            } else {
                (i, j - 1)
            }
        };
        path.push((i, j));
    }
    path.reverse();

    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(n);
    for &(i, j) in &path {
        match pairs.last_mut() {
            Some(last) if last.0 == i => {
                if local[i][j] < local[i][last.1] {
                    last.1 = j;
                }
            }
            _ => pairs.push((i, j)),
        }
    }

    Ok(DtwAlignment {
        map: AlignmentMap::new(pairs, n, m)?,
        path,
        cost: acc[n - 1][m - 1],
    })
}
