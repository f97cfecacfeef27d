//! Oriented Gabor kernels and the texture-smoothing operator built on them.
//!
//! Only the real part of the Gabor function is sampled:
//!
//! ```text
//! g(k1, k2) = exp(-(k1'^2 + γ^2 k2'^2) / (2σ^2)) * cos(2π k1' / λ + ψ)
//! k1' =  k1 cosθ + k2 sinθ
//! k2' = -k1 sinθ + k2 cosθ
//! ```
//!
//! `k1` is the column offset and `k2` the row offset from the kernel centre.
//! Kernels are divided by their raw sum so constant images are fixed points.

use alloc::vec::Vec;
use core::f64::consts::{LN_2, PI};

use thiserror::Error;

use crate::conv::convolve_plane;
use crate::image::{Channel, Image, ImageError};

/// Smallest raw weight sum accepted for DC normalization.
pub const MIN_RAW_SUM: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GaborError {
    #[error("invalid gabor parameter: {0}")]
    InvalidParams(&'static str),
    #[error("kernel raw weight sum {sum} is too small to normalize")]
    DegenerateKernel { sum: f64 },
    #[error("kernel side {side} exceeds image size {width}x{height}")]
    KernelLargerThanImage {
        side: usize,
        width: usize,
        height: usize,
    },
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Rotates kernel coordinates by `theta_deg` degrees.
pub fn rotate_coords(k1: f64, k2: f64, theta_deg: f64) -> (f64, f64) {
    let (s, c) = libm::sincos(theta_deg.to_radians());
    (k1 * c + k2 * s, -k1 * s + k2 * c)
}

/// Maps any finite angle into `[0, 180)`.
pub fn normalize_theta(theta_deg: f64) -> f64 {
    let mut t = libm::fmod(theta_deg, 180.0);
    if t < 0.0 {
        t += 180.0;
    }
    // tiny negative inputs round up to exactly 180
    if t >= 180.0 {
        0.0
    } else {
        t
    }
}

/// Envelope width for a given wavelength and half-magnitude bandwidth in octaves.
pub fn sigma_for_bandwidth(wavelength: f64, octaves: f64) -> f64 {
    let b = libm::exp2(octaves);
    wavelength / PI * libm::sqrt(LN_2 / 2.0) * (b + 1.0) / (b - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaborParams {
    pub wavelength: f64,
    pub phase: f64,
    pub aspect: f64,
    pub sigma: f64,
    /// Degrees, normalized into `[0, 180)` by [`GaborParams::new`].
    pub theta: f64,
    /// Odd kernel side length (`k1 = k2`).
    pub side: usize,
}

impl GaborParams {
    pub fn new(
        wavelength: f64,
        phase: f64,
        aspect: f64,
        sigma: f64,
        theta: f64,
        side: usize,
    ) -> Result<Self, GaborError> {
        let p = Self {
            wavelength,
            phase,
            aspect,
            sigma,
            theta: if theta.is_finite() {
                normalize_theta(theta)
            } else {
                theta
            },
            side,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), GaborError> {
        if self.side < 3 || self.side % 2 == 0 {
            return Err(GaborError::InvalidParams("kernel side must be odd and >= 3"));
        }
        if !(self.wavelength.is_finite() && self.wavelength > 0.0) {
            return Err(GaborError::InvalidParams("wavelength must be finite and > 0"));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(GaborError::InvalidParams("sigma must be finite and > 0"));
        }
        if !(self.aspect.is_finite() && self.aspect > 0.0) {
            return Err(GaborError::InvalidParams("aspect must be finite and > 0"));
        }
        if !self.phase.is_finite() {
            return Err(GaborError::InvalidParams("phase must be finite"));
        }
        if !(self.theta.is_finite() && (0.0..180.0).contains(&self.theta)) {
            return Err(GaborError::InvalidParams("theta must lie in [0, 180)"));
        }
        Ok(())
    }
}

/// How the wavelength is chosen for a given kernel side.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum WavelengthRule {
    /// `λ = factor * k1`
    ScaleMultiple(f64),
    Fixed(f64),
}

impl WavelengthRule {
    pub fn wavelength(&self, side: usize) -> f64 {
        match *self {
            WavelengthRule::ScaleMultiple(f) => f * side as f64,
            WavelengthRule::Fixed(l) => l,
        }
    }
}

/// Everything except `(k1, theta)` needed to build a kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct GaborDefaults {
    pub wavelength: WavelengthRule,
    pub phase: f64,
    pub aspect: f64,
    /// Bandwidth in octaves; sets `σ` from `λ`.
    pub bandwidth: f64,
}

impl Default for GaborDefaults {
    fn default() -> Self {
        Self {
            wavelength: WavelengthRule::ScaleMultiple(2.0),
            phase: 0.0,
            aspect: 0.5,
            bandwidth: 1.0,
        }
    }
}

impl GaborDefaults {
    pub fn validate(&self) -> Result<(), GaborError> {
        let ok = match self.wavelength {
            WavelengthRule::ScaleMultiple(f) => f.is_finite() && f > 0.0,
            WavelengthRule::Fixed(l) => l.is_finite() && l > 0.0,
        };
        if !ok {
            return Err(GaborError::InvalidParams("wavelength rule must be finite and > 0"));
        }
        if !(self.bandwidth.is_finite() && self.bandwidth > 0.0) {
            return Err(GaborError::InvalidParams("bandwidth must be finite and > 0"));
        }
        if !(self.aspect.is_finite() && self.aspect > 0.0) {
            return Err(GaborError::InvalidParams("aspect must be finite and > 0"));
        }
        if !self.phase.is_finite() {
            return Err(GaborError::InvalidParams("phase must be finite"));
        }
        Ok(())
    }

    pub fn params(&self, side: usize, theta: f64) -> Result<GaborParams, GaborError> {
        self.validate()?;
        let wavelength = self.wavelength.wavelength(side);
        GaborParams::new(
            wavelength,
            self.phase,
            self.aspect,
            sigma_for_bandwidth(wavelength, self.bandwidth),
            theta,
            side,
        )
    }
}

/// A DC-normalized, square convolution kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    side: usize,
    weights: Vec<f64>,
}

impl Kernel {
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn radius(&self) -> isize {
        (self.side / 2) as isize
    }

    /// Row-major weights; row index is the `k2` offset.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight at column offset `k1`, row offset `k2`, both in `[-r, r]`.
    pub fn weight(&self, k1: isize, k2: isize) -> f64 {
        let r = self.radius();
        self.weights[((k2 + r) as usize) * self.side + (k1 + r) as usize]
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.weights.chunks_exact(self.side)
    }
}

/// Raw (unnormalized) real Gabor response at integer offset `(k1, k2)`.
pub fn gabor_value(p: &GaborParams, k1: f64, k2: f64) -> f64 {
    let (r1, r2) = rotate_coords(k1, k2, p.theta);
    let envelope = libm::exp(-(r1 * r1 + p.aspect * p.aspect * r2 * r2) / (2.0 * p.sigma * p.sigma));
    envelope * libm::cos(2.0 * PI * r1 / p.wavelength + p.phase)
}

pub fn gabor_kernel(p: &GaborParams) -> Result<Kernel, GaborError> {
    p.validate()?;
    let r = (p.side / 2) as isize;
    let mut weights = Vec::with_capacity(p.side * p.side);
    for k2 in -r..=r {
        for k1 in -r..=r {
            weights.push(gabor_value(p, k1 as f64, k2 as f64));
        }
    }
    let sum: f64 = weights.iter().sum();
    if !(sum > MIN_RAW_SUM) {
        return Err(GaborError::DegenerateKernel { sum });
    }
    for w in &mut weights {
        *w /= sum;
    }
    Ok(Kernel {
        side: p.side,
        weights,
    })
}

/// Convolves every channel with `kernel` (reflect-101 borders), clamping to `[0, 1]`.
pub fn smooth_with_kernel(img: &Image, kernel: &Kernel) -> Result<Image, GaborError> {
    if kernel.side > img.width().min(img.height()) {
        return Err(GaborError::KernelLargerThanImage {
            side: kernel.side,
            width: img.width(),
            height: img.height(),
        });
    }
    img.map_planes(|plane| {
        let mut out = convolve_plane(plane, &kernel.weights, kernel.side);
        for v in &mut out {
            *v = v.clamp(0.0, 1.0);
        }
        Channel::new(plane.width(), plane.height(), out).map_err(GaborError::from)
    })
}

/// The candidate image `G(k1, θ)`: `img` smoothed by the kernel for `p`.
pub fn smooth(img: &Image, p: &GaborParams) -> Result<Image, GaborError> {
    if p.side > img.width().min(img.height()) {
        return Err(GaborError::KernelLargerThanImage {
            side: p.side,
            width: img.width(),
            height: img.height(),
        });
    }
    smooth_with_kernel(img, &gabor_kernel(p)?)
}

/// The removed texture `R = X - G(X)`, stored shifted as `(r + 1) / 2`.
pub fn extract_texture(benign: &Image, smoothed: &Image) -> Result<Image, ImageError> {
    benign.ensure_same_shape(smoothed)?;
    let residual = benign
        .pixels()
        .iter()
        .zip(smoothed.pixels())
        .map(|(b, s)| ((b - s + 1.0) / 2.0).clamp(0.0, 1.0))
        .collect();
    Image::new(benign.width(), benign.height(), benign.channels(), residual)
}

/// Inverse of [`extract_texture`]: `smoothed + (2 * residual - 1)`.
pub fn restore_texture(smoothed: &Image, residual: &Image) -> Result<Image, ImageError> {
    smoothed.ensure_same_shape(residual)?;
    let pixels = smoothed
        .pixels()
        .iter()
        .zip(residual.pixels())
        .map(|(s, r)| (s + (2.0 * r - 1.0)).clamp(0.0, 1.0))
        .collect();
    Image::new(smoothed.width(), smoothed.height(), smoothed.channels(), pixels)
}
