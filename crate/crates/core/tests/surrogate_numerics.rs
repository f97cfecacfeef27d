use advsmo_core::search::{generate_grid, CandidatePair, DEFAULT_K1, DEFAULT_THETA_STEP};
use advsmo_core::surrogate::{
    train, FeatureRange, InputNorm, Params, Sample, SurrogateModel, TrainConfig, HIDDEN, PARAM_COUNT,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn smooth_surface() -> Vec<Sample> {
    generate_grid(&DEFAULT_K1, DEFAULT_THETA_STEP)
        .unwrap()
        .into_iter()
        .map(|pair| Sample {
            pair,
            ssim: 0.5 + 0.3 * (pair.k1 as f64 / 5.0).sin() * (pair.theta as f64 / 30.0).cos(),
        })
        .collect()
}

fn normalized(samples: &[Sample], norm: &InputNorm) -> (Vec<[f64; 2]>, Vec<f64>) {
    let xs = samples
        .iter()
        .map(|s| advsmo_core::surrogate::normalize_input(s.pair, norm).unwrap())
        .collect();
    (xs, samples.iter().map(|s| s.ssim).collect())
}

/// Step-by-step evaluation written independently of `Params::forward`.
fn forward_oracle(p: &Params, x: [f64; 2]) -> f64 {
    let mut hidden = Vec::new();
    for j in 0..HIDDEN {
        let z = p.w1[j][0] * x[0] + p.w1[j][1] * x[1] + p.b1[j];
        hidden.push(((2.0 * z).exp() - 1.0) / ((2.0 * z).exp() + 1.0));
    }
    p.b2 + hidden.iter().zip(p.w2.iter()).map(|(h, w)| h * w).sum::<f64>()
}

#[test]
fn forward_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..20 {
        let p = Params::random(seed);
        let x = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        assert!((p.forward(x) - forward_oracle(&p, x)).abs() < 1e-12);
    }
}

#[test]
fn gradient_matches_central_differences() {
    let data = smooth_surface();
    let norm = InputNorm {
        k1: FeatureRange { min: 3.0, max: 15.0 },
        theta: FeatureRange { min: 0.0, max: 90.0 },
    };
    let (xs, ys) = normalized(&data, &norm);
    let h = 1e-5;
    for seed in 100..120 {
        let p = Params::random(seed);
        let (_, g) = p.loss_and_gradient(&xs, &ys);
        let g = g.to_flat();
        let base = p.to_flat();
        for i in 0..PARAM_COUNT {
            let mut plus = base;
            let mut minus = base;
            plus[i] += h;
            minus[i] -= h;
            let fd = (Params::from_flat(&plus).loss(&xs, &ys) - Params::from_flat(&minus).loss(&xs, &ys)) / (2.0 * h);
            let rel = (g[i] - fd).abs() / g[i].abs().max(fd.abs());
            assert!(rel < 1e-4, "seed {seed} param {i}: analytic {} fd {fd} rel {rel}", g[i]);
        }
    }
}

#[test]
fn fits_smooth_surface() {
    let data = smooth_surface();
    let out = train(&data, &TrainConfig::default()).unwrap();
    let rmse = out.final_loss.sqrt();
    assert!(rmse < 0.05, "rmse {rmse}");
    assert_eq!(out.loss_curve.len(), 700);
    assert_eq!(out.model.epochs_trained, 700);
    assert!(out.model.params.is_finite());
}

#[test]
fn constant_targets_collapse() {
    let data: Vec<Sample> = generate_grid(&[3, 7, 11, 15], 15)
        .unwrap()
        .into_iter()
        .map(|pair| Sample { pair, ssim: 0.4 })
        .collect();
    let out = train(&data, &TrainConfig::default()).unwrap();
    for s in &data {
        assert!((out.model.predict(s.pair).unwrap() - 0.4).abs() < 1e-2);
    }
    // loss never rises across a 50-epoch window
    for e in 0..out.loss_curve.len() - 50 {
        assert!(out.loss_curve[e + 50] <= out.loss_curve[e], "epoch {e}");
    }
}

#[test]
fn training_is_bit_deterministic() {
    let data = smooth_surface();
    let cfg = TrainConfig { seed: 42, epochs: 200, ..TrainConfig::default() };
    let a = train(&data, &cfg).unwrap();
    let b = train(&data, &cfg).unwrap();
    assert_eq!(a.final_loss.to_bits(), b.final_loss.to_bits());
    assert_eq!(a.model, b.model);
    let c = train(&data, &TrainConfig { seed: 43, ..cfg }).unwrap();
    assert_ne!(a.model.params, c.model.params);
}

fn model_from(seed: u64) -> SurrogateModel {
    SurrogateModel {
        params: Params::random(seed),
        input_norm: InputNorm {
            k1: FeatureRange { min: 3.0, max: 15.0 },
            theta: FeatureRange { min: 0.0, max: 90.0 },
        },
        seed,
        epochs_trained: 0,
    }
}

proptest! {
    #[test]
    fn forward_is_lipschitz(seed in 0u64..1000, a in prop::array::uniform2(0.0f64..1.0), b in prop::array::uniform2(0.0f64..1.0)) {
        let m = model_from(seed);
        let p = &m.params;
        let w2_l1: f64 = p.w2.iter().map(|w| w.abs()).sum();
        let w1_row_max = p.w1.iter().map(|r| r[0].abs() + r[1].abs()).fold(0.0, f64::max);
        let dist = (a[0] - b[0]).abs().max((a[1] - b[1]).abs());
        let bound = w2_l1 * w1_row_max * dist;
        prop_assert!((m.forward(a) - m.forward(b)).abs() <= bound + 1e-12);
    }

    #[test]
    fn prediction_uses_clamped_inputs(seed in 0u64..100, k1 in 15u32..40) {
        let m = model_from(seed);
        prop_assert_eq!(m.predict(CandidatePair::new(k1, 0)).unwrap(), m.forward([1.0, 0.0]));
    }
}
