use image::RgbImage;
use rayon::prelude::*;

use super::{AlignError, EmbeddingSequence};
use crate::episode::Episode;

/// Side of the downsampled luma grid; embeddings have `EMBED_SIDE^2` entries.
pub const EMBED_SIDE: usize = 32;

/// Deterministic pixel embedding of every frame: BT.601 luma, area-average
/// downsample to 32x32, z-normalized. Constant frames embed to the zero
/// vector.
pub fn embed_builtin(episode: &Episode) -> Result<EmbeddingSequence, AlignError> {
    if episode.is_empty() {
        return Err(AlignError::EmptyInput(format!(
            "episode '{}' has no frames",
            episode.episode_id()
        )));
    }
    let vectors: Vec<Vec<f64>> = episode
        .frames()
        .par_iter()
        .map(|f| embed_image(f.image()))
        .collect();
    EmbeddingSequence::new(episode.episode_id(), vectors)
}

/// Per-axis coverage of each output cell: `(source index, overlap)` where the
/// overlap is measured in units of `1 / EMBED_SIDE` source pixels.
fn coverage(src_len: usize) -> Vec<Vec<(usize, usize)>> {
    (0..EMBED_SIDE)
        .map(|cell| {
            // cell spans [cell * src_len, (cell + 1) * src_len) in scaled units;
            // source pixel p spans [p * EMBED_SIDE, (p + 1) * EMBED_SIDE)
            let lo = cell * src_len;
            let hi = lo + src_len;
            let first = lo / EMBED_SIDE;
            let last = (hi - 1) / EMBED_SIDE;
            (first..=last)
                .map(|p| {
                    let a = lo.max(p * EMBED_SIDE);
                    let b = hi.min((p + 1) * EMBED_SIDE);
                    (p, b - a)
                })
                .collect()
        })
        .collect()
}

pub fn embed_image(img: &RgbImage) -> Vec<f64> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let cols = coverage(w);
    let rows = coverage(h);
    // luma scaled by 1000 is an integer, so cell sums are exact
    let luma: Vec<u64> = img
        .pixels()
        .map(|p| 299 * p.0[0] as u64 + 587 * p.0[1] as u64 + 114 * p.0[2] as u64)
        .collect();
    let scale = 1000.0 * (w * h) as f64;

    let mut grid = Vec::with_capacity(EMBED_SIDE * EMBED_SIDE);
    for row in &rows {
        for col in &cols {
            let mut acc = 0u64;
            for &(y, wy) in row {
                let line = &luma[y * w..(y + 1) * w];
                for &(x, wx) in col {
                    acc += line[x] * (wx * wy) as u64;
                }
            }
            grid.push(acc as f64 / scale);
        }
    }

    let (min, max) = grid
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if min == max {
        return vec![0.0; grid.len()];
    }
    let n = grid.len() as f64;
    let mean = grid.iter().sum::<f64>() / n;
    let var = grid.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    grid.iter().map(|v| (v - mean) / std).collect()
}
