//! Gray-level co-occurrence matrices and texture-change scores.

use alloc::vec::Vec;

use thiserror::Error;

use crate::image::{Channel, ImageError};

pub const DEFAULT_LEVELS: usize = 8;
pub const DEFAULT_OFFSET: Offset = Offset { dx: 1, dy: 0 };

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TextureError {
    #[error("levels must be in [2, 256], got {0}")]
    InvalidLevels(usize),
    #[error("offset ({dx}, {dy}) does not fit a {width}x{height} channel")]
    InvalidOffset {
        dx: isize,
        dy: isize,
        width: usize,
        height: usize,
    },
    #[error("tile {tile} / stride {stride} invalid for a {width}x{height} channel")]
    InvalidTiling {
        tile: usize,
        stride: usize,
        width: usize,
        height: usize,
    },
    #[error(transparent)]
    DimensionMismatch(#[from] ImageError),
}

/// Pixel displacement from a reference pixel to its neighbour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Offset {
    pub dx: isize,
    pub dy: isize,
}

impl Offset {
    pub const fn new(dx: isize, dy: isize) -> Self {
        Self { dx, dy }
    }

    pub fn negated(self) -> Self {
        Self {
            dx: -self.dx,
            dy: -self.dy,
        }
    }
}

impl Default for Offset {
    fn default() -> Self {
        DEFAULT_OFFSET
    }
}

/// Quantized level of a unit-scale value: `floor(v * levels)`, capped at `levels - 1`.
pub fn quantize(v: f64, levels: usize) -> usize {
    let q = libm::floor(v * levels as f64);
    if q <= 0.0 {
        0
    } else {
        (q as usize).min(levels - 1)
    }
}

/// Co-occurrence counts of ordered pairs `(p, p + offset)`; not symmetrized.
#[derive(Debug, Clone, PartialEq)]
pub struct Glcm {
    levels: usize,
    offset: Offset,
    counts: Vec<u64>,
    total: u64,
}

impl Glcm {
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn offset(&self) -> Offset {
        self.offset
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Row-major `levels x levels` counts; row is the reference level.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.levels + j]
    }

    /// Joint probabilities; all zero when no pair fits.
    pub fn normalized(&self) -> Vec<f64> {
        if self.total == 0 {
            return alloc::vec![0.0; self.counts.len()];
        }
        let t = self.total as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }

    pub fn transpose(&self) -> Glcm {
        let l = self.levels;
        let mut counts = alloc::vec![0; l * l];
        for i in 0..l {
            for j in 0..l {
                counts[j * l + i] = self.counts[i * l + j];
            }
        }
        Glcm {
            levels: l,
            offset: self.offset.negated(),
            counts,
            total: self.total,
        }
    }
}

fn check_levels(levels: usize) -> Result<(), TextureError> {
    if (2..=256).contains(&levels) {
        Ok(())
    } else {
        Err(TextureError::InvalidLevels(levels))
    }
}

pub fn glcm(ch: &Channel, offset: Offset, levels: usize) -> Result<Glcm, TextureError> {
    check_levels(levels)?;
    let (w, h) = (ch.width(), ch.height());
    if offset.dx.unsigned_abs() >= w || offset.dy.unsigned_abs() >= h {
        return Err(TextureError::InvalidOffset {
            dx: offset.dx,
            dy: offset.dy,
            width: w,
            height: h,
        });
    }
    let q: Vec<usize> = ch.values().iter().map(|&v| quantize(v, levels)).collect();
    let mut counts = alloc::vec![0u64; levels * levels];
    // reference pixels whose neighbour stays inside the channel
    let xs = offset.dx.min(0).unsigned_abs()..w - offset.dx.max(0) as usize;
    let ys = offset.dy.min(0).unsigned_abs()..h - offset.dy.max(0) as usize;
    let mut total = 0;
    for y in ys {
        let ny = (y as isize + offset.dy) as usize;
        for x in xs.clone() {
            let nx = (x as isize + offset.dx) as usize;
            counts[q[y * w + x] * levels + q[ny * w + nx]] += 1;
            total += 1;
        }
    }
    Ok(Glcm {
        levels,
        offset,
        counts,
        total,
    })
}

/// L1 distance between the normalized GLCMs of two channels; lies in `[0, 2]`.
pub fn texture_diff(
    benign: &Channel,
    adv: &Channel,
    offset: Offset,
    levels: usize,
) -> Result<f64, TextureError> {
    benign.ensure_same_size(adv)?;
    let p = glcm(benign, offset, levels)?.normalized();
    let q = glcm(adv, offset, levels)?.normalized();
    Ok(p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum())
}

fn crop(ch: &Channel, x0: usize, y0: usize, side: usize) -> Channel {
    Channel::from_fn(side, side, |x, y| ch.get(x0 + x, y0 + y)).expect("crop of a valid channel")
}

/// Per-tile texture change over a sliding `tile x tile` grid.
///
/// Each output pixel is `texture_diff / 2` of one tile, so the map is in `[0, 1]`
/// and has `(w - tile) / stride + 1` columns.
pub fn texture_heatmap(
    benign: &Channel,
    adv: &Channel,
    offset: Offset,
    levels: usize,
    tile: usize,
    stride: usize,
) -> Result<Channel, TextureError> {
    benign.ensure_same_size(adv)?;
    check_levels(levels)?;
    let (w, h) = (benign.width(), benign.height());
    if tile == 0 || stride == 0 || tile > w || tile > h {
        return Err(TextureError::InvalidTiling {
            tile,
            stride,
            width: w,
            height: h,
        });
    }
    if offset.dx.unsigned_abs() >= tile || offset.dy.unsigned_abs() >= tile {
        return Err(TextureError::InvalidOffset {
            dx: offset.dx,
            dy: offset.dy,
            width: tile,
            height: tile,
        });
    }
    let (tw, th) = ((w - tile) / stride + 1, (h - tile) / stride + 1);
    let mut values = Vec::with_capacity(tw * th);
    for ty in 0..th {
        for tx in 0..tw {
            let (x0, y0) = (tx * stride, ty * stride);
            let d = texture_diff(&crop(benign, x0, y0, tile), &crop(adv, x0, y0, tile), offset, levels)?;
            values.push((d / 2.0).clamp(0.0, 1.0));
        }
    }
    Ok(Channel::new(tw, th, values)?)
}
