use advsmo_core::image::Image;
use advsmo_core::metrics::{linf, mse, ssim, SSIM_WINDOW};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, c: usize) -> Image {
    Image::from_fn(w, h, c, |_, _, _| rng.random_range(0.0..=1.0)).unwrap()
}

fn luma(img: &Image, x: usize, y: usize) -> f64 {
    if img.channels() == 1 {
        img.get(x, y, 0)
    } else {
        0.299 * img.get(x, y, 0) + 0.587 * img.get(x, y, 1) + 0.114 * img.get(x, y, 2)
    }
}

/// Two-pass per-window SSIM straight from the definition.
fn ssim_oracle(a: &Image, b: &Image) -> f64 {
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let mut acc = 0.0;
    let mut count = 0;
    for y0 in 0..=a.height() - SSIM_WINDOW {
        for x0 in 0..=a.width() - SSIM_WINDOW {
            let pts: Vec<(f64, f64)> = (0..SSIM_WINDOW)
                .flat_map(|dy| (0..SSIM_WINDOW).map(move |dx| (x0 + dx, y0 + dy)))
                .map(|(x, y)| (luma(a, x, y), luma(b, x, y)))
                .collect();
            let ma = pts.iter().map(|p| p.0).sum::<f64>() / n;
            let mb = pts.iter().map(|p| p.1).sum::<f64>() / n;
            let va = pts.iter().map(|p| (p.0 - ma).powi(2)).sum::<f64>() / n;
            let vb = pts.iter().map(|p| (p.1 - mb).powi(2)).sum::<f64>() / n;
            let cov = pts.iter().map(|p| (p.0 - ma) * (p.1 - mb)).sum::<f64>() / n;
            let (c1, c2) = (0.0001, 0.0009);
            acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    acc / count as f64
}

#[test]
fn ssim_matches_direct_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..50 {
        let c = if i % 2 == 0 { 1 } else { 3 };
        let a = random_image(&mut rng, 16, 16, c);
        let b = random_image(&mut rng, 16, 16, c);
        let got = ssim(&a, &b).unwrap().value;
        assert!((got - ssim_oracle(&a, &b)).abs() < 1e-6);
    }
}

#[test]
fn mse_and_linf_match_naive_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let a = random_image(&mut rng, 11, 9, 3);
        let b = random_image(&mut rng, 11, 9, 3);
        let mut sum = 0.0;
        let mut max: f64 = 0.0;
        for y in 0..9 {
            for x in 0..11 {
                for c in 0..3 {
                    let d = a.get(x, y, c) - b.get(x, y, c);
                    sum += d * d;
                    max = max.max(d.abs());
                }
            }
        }
        assert!((mse(&a, &b).unwrap().value - sum / 297.0).abs() < 1e-12);
        assert_eq!(linf(&a, &b).unwrap().value, max * 255.0);
    }
}

proptest! {
    #[test]
    fn metrics_are_symmetric(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_image(&mut rng, 10, 9, 3);
        let b = random_image(&mut rng, 10, 9, 3);
        prop_assert_eq!(ssim(&a, &b).unwrap().value, ssim(&b, &a).unwrap().value);
        prop_assert_eq!(mse(&a, &b).unwrap().value, mse(&b, &a).unwrap().value);
        prop_assert_eq!(linf(&a, &b).unwrap().value, linf(&b, &a).unwrap().value);
        prop_assert!(ssim(&a, &b).unwrap().value <= 1.0);
    }

    #[test]
    fn zero_distance_iff_equal(seed in 0u64..10_000, idx in 0usize..64, bump in 1u8..=255) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_image(&mut rng, 8, 8, 1);
        prop_assert_eq!(mse(&a, &a).unwrap().value, 0.0);
        prop_assert_eq!(linf(&a, &a).unwrap().value, 0.0);
        let mut px = a.pixels().to_vec();
        px[idx] = (px[idx] + bump as f64 / 255.0) % 1.0;
        let b = Image::new(8, 8, 1, px).unwrap();
        if b != a {
            prop_assert!(mse(&a, &b).unwrap().value > 0.0);
            prop_assert!(linf(&a, &b).unwrap().value > 0.0);
        }
    }

    #[test]
    fn linf_monotone_in_single_pixel(seed in 0u64..10_000, idx in 0usize..64, extra in 0.0f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_image(&mut rng, 8, 8, 1);
        let b = random_image(&mut rng, 8, 8, 1);
        let before = linf(&a, &b).unwrap().value;
        let mut px = b.pixels().to_vec();
        // push pixel idx further away from a
        px[idx] = if px[idx] >= a.pixels()[idx] { (px[idx] + extra).min(1.0) } else { (px[idx] - extra).max(0.0) };
        let worse = Image::new(8, 8, 1, px).unwrap();
        prop_assert!(linf(&a, &worse).unwrap().value >= before);
    }
}
