//! PSNR and SSIM between frames, and per-episode evaluation reports.
//!
//! PSNR is computed jointly over the three RGB channels with a peak of 255.
//! SSIM is single-scale on BT.601 luma with an 8x8 uniform window at stride
//! 1, population statistics, `C1 = (0.01*255)^2` and `C2 = (0.03*255)^2`,
//! averaged over all window positions.

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::Episode;
use crate::raster::luma_plane;

pub const SSIM_WINDOW: usize = 8;
pub const PEAK: f64 = 255.0;
pub const SSIM_C1: f64 = (0.01 * PEAK) * (0.01 * PEAK);
pub const SSIM_C2: f64 = (0.03 * PEAK) * (0.03 * PEAK);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricError {
    #[error("image dimensions differ: {0:?} vs {1:?}")]
    DimMismatch((u32, u32), (u32, u32)),
    #[error("image {0:?} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")]
    TooSmall((u32, u32)),
    #[error("episodes have {pred} and {truth} frames")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("frame {index}: {source}")]
    AtFrame {
        index: usize,
        #[source]
        source: Box<MetricError>,
    },
}

/// PSNR in dB; identical images have no finite value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    Finite(f64),
    Infinite,
}

impl Psnr {
    pub fn finite(self) -> Option<f64> {
        match self {
            Psnr::Finite(v) => Some(v),
            Psnr::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Psnr::Infinite)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PsnrRepr {
    Number(f64),
    Text(String),
}

// finite values as numbers, the infinite sentinel as "inf"
impl Serialize for Psnr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Psnr::Finite(v) => PsnrRepr::Number(*v),
            Psnr::Infinite => PsnrRepr::Text("inf".into()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Psnr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match PsnrRepr::deserialize(d)? {
            PsnrRepr::Number(v) => Ok(Psnr::Finite(v)),
            PsnrRepr::Text(t) if t == "inf" => Ok(Psnr::Infinite),
            PsnrRepr::Text(t) => Err(serde::de::Error::custom(format!("bad psnr value '{t}'"))),
        }
    }
}

fn check_dims(a: &RgbImage, b: &RgbImage) -> Result<(), MetricError> {
    if a.dimensions() != b.dimensions() {
        return Err(MetricError::DimMismatch(a.dimensions(), b.dimensions()));
    }
    Ok(())
}

pub fn mse(a: &RgbImage, b: &RgbImage) -> Result<f64, MetricError> {
    check_dims(a, b)?;
    let n = a.as_raw().len();
    if n == 0 {
        return Ok(0.0);
    }
    let sum: u64 = a
        .as_raw()
        .iter()
        .zip(b.as_raw())
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum();
    Ok(sum as f64 / n as f64)
}

pub fn psnr(a: &RgbImage, b: &RgbImage) -> Result<Psnr, MetricError> {
    let mse = mse(a, b)?;
    Ok(if mse == 0.0 {
        Psnr::Infinite
    } else {
        Psnr::Finite(10.0 * (PEAK * PEAK / mse).log10())
    })
}

/// Summed-area table with a zero border row and column.
struct Integral {
    stride: usize,
    data: Vec<f64>,
}

impl Integral {
    fn new(values: impl Iterator<Item = f64>, w: usize, h: usize) -> Self {
        let stride = w + 1;
        let mut data = vec![0.0; stride * (h + 1)];
        let mut it = values;
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += it.next().expect("plane size");
                data[(y + 1) * stride + x + 1] = data[y * stride + x + 1] + row;
            }
        }
        Self { stride, data }
    }

    fn window(&self, x: usize, y: usize, s: usize) -> f64 {
        let at = |xx: usize, yy: usize| self.data[yy * self.stride + xx];
        at(x + s, y + s) - at(x, y + s) - at(x + s, y) + at(x, y)
    }
}

pub fn ssim(a: &RgbImage, b: &RgbImage) -> Result<f64, MetricError> {
    check_dims(a, b)?;
    let (w, h) = (a.width() as usize, a.height() as usize);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(MetricError::TooSmall(a.dimensions()));
    }
    let la = luma_plane(a);
    let lb = luma_plane(b);
    let sa = Integral::new(la.iter().copied(), w, h);
    let sb = Integral::new(lb.iter().copied(), w, h);
    let saa = Integral::new(la.iter().map(|v| v * v), w, h);
    let sbb = Integral::new(lb.iter().map(|v| v * v), w, h);
    let sab = Integral::new(la.iter().zip(&lb).map(|(x, y)| x * y), w, h);

    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for y in 0..=h - SSIM_WINDOW {
        for x in 0..=w - SSIM_WINDOW {
            let mu_a = sa.window(x, y, SSIM_WINDOW) / n;
            let mu_b = sb.window(x, y, SSIM_WINDOW) / n;
            let var_a = saa.window(x, y, SSIM_WINDOW) / n - mu_a * mu_a;
            let var_b = sbb.window(x, y, SSIM_WINDOW) / n - mu_b * mu_b;
            let cov = sab.window(x, y, SSIM_WINDOW) / n - mu_a * mu_b;
            let num = (2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2);
            let den = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2);
            total += num / den;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMetric {
    pub idx: usize,
    pub psnr_db: Psnr,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_frame: Vec<FrameMetric>,
    /// Mean over frames with finite PSNR; `None` when every frame is exact.
    pub mean_psnr_db: Option<f64>,
    pub infinite_psnr_frames: usize,
    pub mean_ssim: f64,
}

impl MetricReport {
    pub fn from_frames(per_frame: Vec<FrameMetric>) -> Self {
        let finite: Vec<f64> = per_frame.iter().filter_map(|f| f.psnr_db.finite()).collect();
        let mean_psnr_db = (!finite.is_empty()).then(|| finite.iter().sum::<f64>() / finite.len() as f64);
        let mean_ssim = if per_frame.is_empty() {
            f64::NAN
        } else {
            per_frame.iter().map(|f| f.ssim).sum::<f64>() / per_frame.len() as f64
        };
        Self {
            infinite_psnr_frames: per_frame.len() - finite.len(),
            per_frame,
            mean_psnr_db,
            mean_ssim,
        }
    }
}

pub fn evaluate_frames(pred: &[&RgbImage], truth: &[&RgbImage]) -> Result<MetricReport, MetricError> {
    if pred.len() != truth.len() {
        return Err(MetricError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    let per_frame = pred
        .par_iter()
        .zip(truth.par_iter())
        .enumerate()
        .map(|(idx, (p, t))| {
            let wrap = |e| MetricError::AtFrame {
                index: idx,
                source: Box::new(e),
            };
            Ok(FrameMetric {
                idx,
                psnr_db: psnr(p, t).map_err(wrap)?,
                ssim: ssim(p, t).map_err(wrap)?,
            })
        })
        .collect::<Result<Vec<_>, MetricError>>()?;
    Ok(MetricReport::from_frames(per_frame))
}

pub fn evaluate_episode(pred: &Episode, truth: &Episode) -> Result<MetricReport, MetricError> {
    let p: Vec<&RgbImage> = pred.frames().iter().map(|f| f.image()).collect();
    let t: Vec<&RgbImage> = truth.frames().iter().map(|f| f.image()).collect();
    evaluate_frames(&p, &t)
}

/// Metric conventions recorded alongside every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    pub psnr_channels: String,
    pub psnr_peak: f64,
    pub ssim_channel: String,
    pub ssim_window: usize,
    pub ssim_stride: usize,
    pub ssim_weights: String,
    pub ssim_statistics: String,
    pub ssim_c1: f64,
    pub ssim_c2: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            psnr_channels: "rgb_joint".into(),
            psnr_peak: PEAK,
            ssim_channel: "luma_bt601".into(),
            ssim_window: SSIM_WINDOW,
            ssim_stride: 1,
            ssim_weights: "uniform".into(),
            ssim_statistics: "population".into(),
            ssim_c1: SSIM_C1,
            ssim_c2: SSIM_C2,
        }
    }
}

/// `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub config: serde_json::Value,
    pub mean_psnr_db: Option<f64>,
    pub infinite_psnr_frames: usize,
    pub mean_ssim: f64,
    pub per_frame: Vec<FrameMetric>,
}

impl ReportFile {
    pub fn new(config: serde_json::Value, report: &MetricReport) -> Self {
        Self {
            config,
            mean_psnr_db: report.mean_psnr_db,
            infinite_psnr_frames: report.infinite_psnr_frames,
            mean_ssim: report.mean_ssim,
            per_frame: report.per_frame.clone(),
        }
    }
}
