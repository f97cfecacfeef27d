//! Input-purification filters used to test whether adversarial examples
//! survive common preprocessing defenses.

use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::conv::{convolve_plane, map_windows};
use crate::image::{Channel, Image, ImageError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DefenseError {
    #[error("window {window} exceeds image size {width}x{height}")]
    WindowTooLarge {
        window: usize,
        width: usize,
        height: usize,
    },
    #[error("window must be odd and >= 3, got {0}")]
    InvalidWindow(usize),
    #[error("gaussian sigma must be finite and > 0, got {0}")]
    InvalidSigma(f64),
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "lowercase"))]
pub enum DefenseKind {
    /// Downscale by 2 and back up with bilinear interpolation.
    Bilinear,
    Gaussian { sigma: f64 },
    Max,
    Mean,
    Median,
    Min,
}

impl DefenseKind {
    pub fn name(&self) -> &'static str {
        match self {
            DefenseKind::Bilinear => "bilinear",
            DefenseKind::Gaussian { .. } => "gaussian",
            DefenseKind::Max => "max",
            DefenseKind::Mean => "mean",
            DefenseKind::Median => "median",
            DefenseKind::Min => "min",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Defense {
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub kind: DefenseKind,
    pub window: usize,
}

impl Defense {
    pub const fn new(kind: DefenseKind, window: usize) -> Self {
        Self { kind, window }
    }

    /// The six standard filters with a 3x3 window (gaussian sigma 1).
    pub fn battery() -> [Defense; 6] {
        [
            Defense::new(DefenseKind::Bilinear, 3),
            Defense::new(DefenseKind::Gaussian { sigma: 1.0 }, 3),
            Defense::new(DefenseKind::Max, 3),
            Defense::new(DefenseKind::Mean, 3),
            Defense::new(DefenseKind::Median, 3),
            Defense::new(DefenseKind::Min, 3),
        ]
    }

    pub fn validate(&self) -> Result<(), DefenseError> {
        if self.window < 3 || self.window % 2 == 0 {
            return Err(DefenseError::InvalidWindow(self.window));
        }
        if let DefenseKind::Gaussian { sigma } = self.kind {
            if !(sigma.is_finite() && sigma > 0.0) {
                return Err(DefenseError::InvalidSigma(sigma));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Defense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            DefenseKind::Gaussian { sigma } => write!(f, "gaussian{}-s{}", self.window, sigma),
            k => write!(f, "{}{}", k.name(), self.window),
        }
    }
}

fn gaussian_weights(side: usize, sigma: f64) -> Vec<f64> {
    let r = (side / 2) as isize;
    let mut w = Vec::with_capacity(side * side);
    for dy in -r..=r {
        for dx in -r..=r {
            w.push(libm::exp(-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)));
        }
    }
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= sum);
    w
}

/// Bilinear resampling with half-pixel centres and edge clamping.
pub fn resize_bilinear(plane: &Channel, new_w: usize, new_h: usize) -> Channel {
    let (w, h) = (plane.width(), plane.height());
    let axis = |dst: usize, src_len: usize, dst_len: usize| -> (usize, usize, f64) {
        let s = ((dst as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5).clamp(0.0, (src_len - 1) as f64);
        let i0 = libm::floor(s) as usize;
        let i1 = (i0 + 1).min(src_len - 1);
        (i0, i1, s - i0 as f64)
    };
    Channel::from_fn(new_w, new_h, |x, y| {
        let (x0, x1, fx) = axis(x, w, new_w);
        let (y0, y1, fy) = axis(y, h, new_h);
        // a + (b - a) * t keeps equal neighbours exact
        let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
        let top = lerp(plane.get(x0, y0), plane.get(x1, y0), fx);
        let bottom = lerp(plane.get(x0, y1), plane.get(x1, y1), fx);
        lerp(top, bottom, fy).clamp(0.0, 1.0)
    })
    .expect("interpolated values stay in range")
}

fn filter_plane(plane: &Channel, d: &Defense) -> Result<Channel, DefenseError> {
    let side = d.window;
    let values = match d.kind {
        DefenseKind::Bilinear => {
            let (w, h) = (plane.width(), plane.height());
            let small = resize_bilinear(plane, w.div_ceil(2), h.div_ceil(2));
            return Ok(resize_bilinear(&small, w, h));
        }
        DefenseKind::Gaussian { sigma } => {
            let mut out = convolve_plane(plane, &gaussian_weights(side, sigma), side);
            out.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
            out
        }
        DefenseKind::Max => map_windows(plane, side, |win| win.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        DefenseKind::Min => map_windows(plane, side, |win| win.iter().copied().fold(f64::INFINITY, f64::min)),
        DefenseKind::Mean => map_windows(plane, side, |win| {
            let (lo, hi) = win
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            (win.iter().sum::<f64>() / win.len() as f64).clamp(lo, hi)
        }),
        DefenseKind::Median => map_windows(plane, side, |win| {
            let mid = win.len() / 2;
            *win.select_nth_unstable_by(mid, f64::total_cmp).1
        }),
    };
    Ok(Channel::new(plane.width(), plane.height(), values)?)
}

/// Applies `d` to every channel with reflect-101 borders.
pub fn apply_defense(img: &Image, d: &Defense) -> Result<Image, DefenseError> {
    d.validate()?;
    if d.window > img.width().min(img.height()) {
        return Err(DefenseError::WindowTooLarge {
            window: d.window,
            width: img.width(),
            height: img.height(),
        });
    }
    img.map_planes(|plane| filter_plane(plane, d))
}
