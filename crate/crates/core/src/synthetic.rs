//! Seeded synthetic images with strong linear texture, for tests and demos.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StripeSpec {
    pub size: usize,
    /// Pixels per cycle.
    pub period: f64,
    /// Direction of intensity variation, degrees.
    pub angle: f64,
    pub phase: f64,
    pub low: f64,
    pub high: f64,
}

/// Sinusoidal grating between `low` and `high`.
pub fn stripes(spec: &StripeSpec) -> Image {
    let (s, c) = libm::sincos(spec.angle.to_radians());
    Image::from_fn(spec.size, spec.size, 1, |x, y, _| {
        let t = (x as f64 * c + y as f64 * s) * 2.0 * PI / spec.period + spec.phase;
        let v = spec.low + (spec.high - spec.low) * 0.5 * (1.0 + libm::cos(t));
        v.clamp(0.0, 1.0)
    })
    .expect("grating values are clamped")
}

/// `count` random gratings with periods 3–8 px, any orientation, mid-range contrast.
pub fn stripe_set(count: usize, size: usize, seed: u64) -> Vec<(StripeSpec, Image)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let low = rng.random_range(0.05..0.3);
            let spec = StripeSpec {
                size,
                period: rng.random_range(3.0..8.0),
                angle: rng.random_range(0.0..180.0),
                phase: rng.random_range(0.0..2.0 * PI),
                low,
                high: rng.random_range(low + 0.4..0.95),
            };
            (spec, stripes(&spec))
        })
        .collect()
}
