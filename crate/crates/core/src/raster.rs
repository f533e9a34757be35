//! Binary masks and small raster helpers shared by the image stages.

use image::{GrayImage, Luma, RgbImage};

/// Binary raster, row-major, `true` = inside the mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl Mask {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn full(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width as usize * height as usize],
        }
    }

    /// Panics if `bits.len() != width * height`.
    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), width as usize * height as usize, "mask size");
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    /// Any nonzero gray value is inside the mask.
    pub fn from_gray(img: &GrayImage) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            bits: img.as_raw().iter().map(|&v| v != 0).collect(),
        }
    }

    /// 0 = background, 255 = mask.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| {
            Luma([if self.get(x, y) { 255 } else { 0 }])
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        let w = self.width as usize;
        self.bits[y as usize * w + x as usize] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    fn zip_with(&self, other: &Mask, f: impl Fn(bool, bool) -> bool) -> Mask {
        assert_eq!(self.dimensions(), other.dimensions(), "mask dimensions");
        Mask {
            width: self.width,
            height: self.height,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Panics on dimension mismatch, as do the other set operations.
    pub fn union(&self, other: &Mask) -> Mask {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &Mask) -> Mask {
        self.zip_with(other, |a, b| a && b)
    }

    /// `self \ other`.
    pub fn difference(&self, other: &Mask) -> Mask {
        self.zip_with(other, |a, b| a && !b)
    }

    pub fn intersection_count(&self, other: &Mask) -> usize {
        assert_eq!(self.dimensions(), other.dimensions(), "mask dimensions");
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(&a, &b)| a && b)
            .count()
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.dimensions() == other.dimensions()
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Dilation with a `(2r+1) x (2r+1)` square structuring element, computed
    /// as separable row and column max filters.
    pub fn dilate(&self, radius: u32) -> Mask {
        if radius == 0 || self.bits.is_empty() {
            return self.clone();
        }
        let (w, h) = (self.width as usize, self.height as usize);
        let r = radius as usize;
        let mut rows = vec![false; w * h];
        for y in 0..h {
            let line = &self.bits[y * w..(y + 1) * w];
            run_max(line, r, &mut rows[y * w..(y + 1) * w]);
        }
        let mut out = vec![false; w * h];
        let mut col = vec![false; h];
        let mut col_out = vec![false; h];
        for x in 0..w {
            for y in 0..h {
                col[y] = rows[y * w + x];
            }
            run_max(&col, r, &mut col_out);
            for y in 0..h {
                out[y * w + x] = col_out[y];
            }
        }
        Mask {
            width: self.width,
            height: self.height,
            bits: out,
        }
    }
}

// 1-D boolean max filter of half-width r using a running count.
fn run_max(line: &[bool], r: usize, out: &mut [bool]) {
    let n = line.len();
    let mut count = 0usize;
    for &b in line.iter().take(r.min(n)) {
        count += b as usize;
    }
    for i in 0..n {
        if i + r < n {
            count += line[i + r] as usize;
        }
        if i > r {
            count -= line[i - r - 1] as usize;
        }
        out[i] = count > 0;
    }
}

/// BT.601 luma of an RGB pixel.
#[inline]
pub fn luma(p: [u8; 3]) -> f64 {
    0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64
}

/// Luma plane of an RGB image, row-major.
pub fn luma_plane(img: &RgbImage) -> Vec<f64> {
    img.pixels().map(|p| luma(p.0)).collect()
}
