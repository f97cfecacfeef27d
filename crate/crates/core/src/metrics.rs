//! Distance measurements between a candidate and its benign image.
//!
//! SSIM and MSE are reported on the unit pixel scale, L∞ on the 0–255 scale.

use core::fmt;

use thiserror::Error;

use crate::image::{to_luma, Channel, Image, ImageError};

/// SSIM window side.
pub const SSIM_WINDOW: usize = 8;
/// `(0.01 * L)^2` with `L = 1`.
pub const SSIM_C1: f64 = 0.01 * 0.01;
/// `(0.03 * L)^2` with `L = 1`.
pub const SSIM_C2: f64 = 0.03 * 0.03;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error(transparent)]
    DimensionMismatch(#[from] ImageError),
    #[error("image {width}x{height} is smaller than the {window}x{window} SSIM window")]
    TooSmall {
        width: usize,
        height: usize,
        window: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum MetricKind {
    Ssim,
    Mse,
    Linf,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [MetricKind::Ssim, MetricKind::Mse, MetricKind::Linf];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Ssim => "ssim",
            MetricKind::Mse => "mse",
            MetricKind::Linf => "linf",
        }
    }

    /// Scale the value is expressed on.
    pub fn scale(self) -> MetricScale {
        match self {
            MetricKind::Ssim | MetricKind::Mse => MetricScale::Unit,
            MetricKind::Linf => MetricScale::EightBit,
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricScale {
    Unit,
    EightBit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricValue {
    pub kind: MetricKind,
    pub value: f64,
}

/// All three measurements of one candidate against its benign image.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricTriple {
    pub ssim: f64,
    pub mse: f64,
    pub linf: f64,
}

impl MetricTriple {
    pub fn measure(a: &Image, b: &Image) -> Result<Self, MetricError> {
        Ok(Self {
            ssim: ssim(a, b)?.value,
            mse: mse(a, b)?.value,
            linf: linf(a, b)?.value,
        })
    }

    pub fn get(&self, kind: MetricKind) -> f64 {
        match kind {
            MetricKind::Ssim => self.ssim,
            MetricKind::Mse => self.mse,
            MetricKind::Linf => self.linf,
        }
    }
}

/// Mean SSIM over every 8x8 window (stride 1) of the luma planes.
pub fn ssim(a: &Image, b: &Image) -> Result<MetricValue, MetricError> {
    a.ensure_same_shape(b)?;
    Ok(MetricValue {
        kind: MetricKind::Ssim,
        value: ssim_channel(&to_luma(a), &to_luma(b))?,
    })
}

/// SSIM of two planes with uniform weights and population statistics.
pub fn ssim_channel(a: &Channel, b: &Channel) -> Result<f64, MetricError> {
    a.ensure_same_size(b)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(MetricError::TooSmall {
            width: w,
            height: h,
            window: SSIM_WINDOW,
        });
    }
    let (av, bv) = (a.values(), b.values());
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let (nx, ny) = (w - SSIM_WINDOW + 1, h - SSIM_WINDOW + 1);

    // per-column sums over the current band of rows: a, b, a², b², ab
    let mut cols = alloc::vec![[0.0f64; 5]; w];
    let mut total = 0.0;
    for y in 0..ny {
        for (x, col) in cols.iter_mut().enumerate() {
            *col = [0.0; 5];
            for row in y..y + SSIM_WINDOW {
                let (p, q) = (av[row * w + x], bv[row * w + x]);
                col[0] += p;
                col[1] += q;
                col[2] += p * p;
                col[3] += q * q;
                col[4] += p * q;
            }
        }
        for x in 0..nx {
            let mut s = [0.0f64; 5];
            for col in &cols[x..x + SSIM_WINDOW] {
                for k in 0..5 {
                    s[k] += col[k];
                }
            }
            let (ma, mb) = (s[0] / n, s[1] / n);
            let va = (s[2] / n - ma * ma).max(0.0);
            let vb = (s[3] / n - mb * mb).max(0.0);
            let cov = s[4] / n - ma * mb;
            let num = (2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2);
            let den = (ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2);
            total += (num / den).clamp(-1.0, 1.0);
        }
    }
    Ok(total / (nx * ny) as f64)
}

/// Mean squared difference over all pixels and channels, unit scale.
pub fn mse(a: &Image, b: &Image) -> Result<MetricValue, MetricError> {
    a.ensure_same_shape(b)?;
    let sum: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(p, q)| (p - q) * (p - q))
        .sum();
    Ok(MetricValue {
        kind: MetricKind::Mse,
        value: sum / a.pixels().len() as f64,
    })
}

/// Largest absolute difference on the 0–255 scale.
pub fn linf(a: &Image, b: &Image) -> Result<MetricValue, MetricError> {
    a.ensure_same_shape(b)?;
    let max = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(p, q)| (p - q).abs())
        .fold(0.0f64, f64::max);
    Ok(MetricValue {
        kind: MetricKind::Linf,
        value: max * 255.0,
    })
}
