use advsmo_core::gabor::{
    gabor_kernel, rotate_coords, sigma_for_bandwidth, smooth, GaborDefaults, GaborParams, WavelengthRule,
};
use advsmo_core::image::Image;
use advsmo_core::search::{generate_grid, DEFAULT_K1, DEFAULT_THETA_STEP};
use proptest::prelude::*;

fn params(side: usize, theta: f64, wavelength: f64, phase: f64) -> GaborParams {
    GaborParams::new(wavelength, phase, 0.5, sigma_for_bandwidth(wavelength, 1.0), theta, side).unwrap()
}

#[test]
fn default_grid_kernels_are_dc_normalized() {
    let defaults = GaborDefaults::default();
    for pair in generate_grid(&DEFAULT_K1, DEFAULT_THETA_STEP).unwrap() {
        let k = gabor_kernel(&defaults.params(pair.k1 as usize, pair.theta as f64).unwrap()).unwrap();
        assert!((k.sum() - 1.0).abs() < 1e-9, "{pair}: {}", k.sum());
    }
}

#[test]
fn half_scale_wavelength_is_mostly_degenerate() {
    // λ = k1/2 leaves most of the default grid without a usable DC component
    let defaults = GaborDefaults {
        wavelength: WavelengthRule::ScaleMultiple(0.5),
        ..GaborDefaults::default()
    };
    let degenerate = generate_grid(&DEFAULT_K1, DEFAULT_THETA_STEP)
        .unwrap()
        .into_iter()
        .filter(|p| gabor_kernel(&defaults.params(p.k1 as usize, p.theta as f64).unwrap()).is_err())
        .count();
    assert!(degenerate > 60, "{degenerate}");
}

proptest! {
    #[test]
    fn rotation_preserves_norm(k1 in -50.0f64..50.0, k2 in -50.0f64..50.0, theta in -720.0f64..720.0) {
        let (a, b) = rotate_coords(k1, k2, theta);
        prop_assert!(((a * a + b * b) - (k1 * k1 + k2 * k2)).abs() < 1e-12 * (1.0 + k1 * k1 + k2 * k2));
    }

    #[test]
    fn zero_phase_kernels_are_even(side in prop::sample::select(vec![3usize, 5, 7, 9, 11]), theta in 0.0f64..180.0, mult in 1.5f64..4.0) {
        let k = gabor_kernel(&params(side, theta, mult * side as f64, 0.0)).unwrap();
        let r = k.radius();
        for k2 in -r..=r {
            for k1 in -r..=r {
                prop_assert_eq!(k.weight(k1, k2), k.weight(-k1, -k2));
            }
        }
    }

    #[test]
    fn smoothing_stays_in_range(seed in 0u64..500, theta in 0.0f64..180.0, phase in -3.0f64..3.0) {
        let img = Image::from_fn(12, 12, 3, |x, y, c| (((x * 13 + y * 7 + c * 5) as u64 * (seed + 1)) % 97) as f64 / 96.0).unwrap();
        // a small wavelength produces large negative lobes, so clamping is exercised
        if let Ok(k) = gabor_kernel(&params(5, theta, 3.0, phase)) {
            let p = params(5, theta, 3.0, phase);
            let out = smooth(&img, &p).unwrap();
            prop_assert_eq!(out.shape(), img.shape());
            prop_assert!(out.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!((k.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn smoothing_is_linear_without_clamping(a in 0.01f64..=1.0, theta in 0.0f64..180.0) {
        // pure envelope (λ → ∞): non-negative weights, so outputs stay inside [0, 1]
        let p = GaborParams::new(1e6, 0.0, 0.5, 2.0, theta, 7).unwrap();
        let img = Image::from_fn(16, 16, 1, |x, y, _| ((x * 3 + y * 5) % 7) as f64 / 6.0).unwrap();
        let scaled = Image::from_fn(16, 16, 1, |x, y, c| a * img.get(x, y, c)).unwrap();
        let lhs = smooth(&scaled, &p).unwrap();
        let rhs = smooth(&img, &p).unwrap();
        for (l, r) in lhs.pixels().iter().zip(rhs.pixels()) {
            prop_assert!((l - a * r).abs() < 1e-9);
        }
    }
}
