//! A 2 → 10 → 1 regression network fitting `(k1, theta) → SSIM`, trained
//! full-batch with Adam on mean squared error.
//!
//! Inputs are min–max normalized per feature. The hidden layer uses `tanh`,
//! the output is linear. Parameters are drawn uniformly from `[-0.5, 0.5]`
//! with a ChaCha8 generator seeded from [`TrainConfig::seed`], and every sum
//! runs in a fixed order, so training is bit-reproducible.
//!
//! Training runs on standardized targets `(y - mean) / sd`; the returned
//! model has that affine map folded into `w2` and `b2`, so it predicts raw
//! SSIM through the plain forward formula.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::search::CandidatePair;

pub const HIDDEN: usize = 10;
pub const INPUTS: usize = 2;
/// Number of trainable scalars: `w1`, `b1`, `w2`, `b2`.
pub const PARAM_COUNT: usize = HIDDEN * INPUTS + HIDDEN + HIDDEN + 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SurrogateError {
    #[error("feature range [{min}, {max}] is degenerate")]
    DegenerateRange { min: f64, max: f64 },
    #[error("training needs at least two distinct samples")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    InvalidConfig(&'static str),
    #[error("grid is empty")]
    EmptyGrid,
    #[error("quantiles must satisfy 0 <= lo < hi <= 1, got ({0}, {1})")]
    InvalidQuantiles(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeatureRange {
    pub min: f64,
    pub max: f64,
}

impl FeatureRange {
    /// Range spanned by `values`; a constant feature gets `(v - 0.5, v + 0.5)`.
    pub fn spanning(values: impl Iterator<Item = f64>) -> Option<Self> {
        let (min, max) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if !min.is_finite() || !max.is_finite() {
            return None;
        }
        Some(if min < max {
            Self { min, max }
        } else {
            Self {
                min: min - 0.5,
                max: max + 0.5,
            }
        })
    }

    pub fn normalize(&self, v: f64) -> Result<f64, SurrogateError> {
        if !(self.min < self.max) {
            return Err(SurrogateError::DegenerateRange {
                min: self.min,
                max: self.max,
            });
        }
        Ok(((v - self.min) / (self.max - self.min)).clamp(0.0, 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InputNorm {
    pub k1: FeatureRange,
    pub theta: FeatureRange,
}

/// Maps `pair` into `[0, 1]^2`; values outside the range are clamped.
pub fn normalize_input(pair: CandidatePair, norm: &InputNorm) -> Result<[f64; 2], SurrogateError> {
    Ok([
        norm.k1.normalize(f64::from(pair.k1))?,
        norm.theta.normalize(f64::from(pair.theta))?,
    ])
}

/// Trainable parameters, in the flat order `w1` (row-major), `b1`, `w2`, `b2`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Params {
    pub w1: [[f64; INPUTS]; HIDDEN],
    pub b1: [f64; HIDDEN],
    pub w2: [f64; HIDDEN],
    pub b2: f64,
}

impl Params {
    pub const ZERO: Params = Params {
        w1: [[0.0; INPUTS]; HIDDEN],
        b1: [0.0; HIDDEN],
        w2: [0.0; HIDDEN],
        b2: 0.0,
    };

    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut flat = [0.0; PARAM_COUNT];
        for v in &mut flat {
            *v = rng.random_range(-0.5..=0.5);
        }
        Self::from_flat(&flat)
    }

    pub fn to_flat(&self) -> [f64; PARAM_COUNT] {
        let mut out = [0.0; PARAM_COUNT];
        let mut i = 0;
        for row in &self.w1 {
            for &w in row {
                out[i] = w;
                i += 1;
            }
        }
        for &b in &self.b1 {
            out[i] = b;
            i += 1;
        }
        for &w in &self.w2 {
            out[i] = w;
            i += 1;
        }
        out[i] = self.b2;
        out
    }

    pub fn from_flat(flat: &[f64; PARAM_COUNT]) -> Self {
        let mut p = Params::ZERO;
        let mut it = flat.iter().copied();
        for row in &mut p.w1 {
            for w in row.iter_mut() {
                *w = it.next().unwrap();
            }
        }
        for b in &mut p.b1 {
            *b = it.next().unwrap();
        }
        for w in &mut p.w2 {
            *w = it.next().unwrap();
        }
        p.b2 = it.next().unwrap();
        p
    }

    fn hidden(&self, x: [f64; INPUTS]) -> [f64; HIDDEN] {
        let mut h = [0.0; HIDDEN];
        for (j, hj) in h.iter_mut().enumerate() {
            *hj = libm::tanh(self.w1[j][0] * x[0] + self.w1[j][1] * x[1] + self.b1[j]);
        }
        h
    }

    /// `b2 + w2 · tanh(w1 x + b1)`.
    pub fn forward(&self, x: [f64; INPUTS]) -> f64 {
        let h = self.hidden(x);
        let mut out = self.b2;
        for j in 0..HIDDEN {
            out += self.w2[j] * h[j];
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }

    /// Mean squared error over normalized inputs `xs` and targets `ys`.
    pub fn loss(&self, xs: &[[f64; INPUTS]], ys: &[f64]) -> f64 {
        let sum: f64 = xs
            .iter()
            .zip(ys)
            .map(|(&x, &y)| {
                let e = self.forward(x) - y;
                e * e
            })
            .sum();
        sum / xs.len() as f64
    }

    /// Loss and its exact gradient by backpropagation.
    pub fn loss_and_gradient(&self, xs: &[[f64; INPUTS]], ys: &[f64]) -> (f64, Params) {
        let n = xs.len() as f64;
        let mut g = Params::ZERO;
        let mut loss = 0.0;
        for (&x, &y) in xs.iter().zip(ys) {
            let h = self.hidden(x);
            let mut out = self.b2;
            for j in 0..HIDDEN {
                out += self.w2[j] * h[j];
            }
            let err = out - y;
            loss += err * err;
            let d_out = 2.0 * err / n;
            g.b2 += d_out;
            for j in 0..HIDDEN {
                g.w2[j] += d_out * h[j];
                let d_pre = d_out * self.w2[j] * (1.0 - h[j] * h[j]);
                g.b1[j] += d_pre;
                g.w1[j][0] += d_pre * x[0];
                g.w1[j][1] += d_pre * x[1];
            }
        }
        (loss / n, g)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SurrogateModel {
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub params: Params,
    pub input_norm: InputNorm,
    pub seed: u64,
    pub epochs_trained: usize,
}

impl SurrogateModel {
    pub fn forward(&self, x: [f64; INPUTS]) -> f64 {
        self.params.forward(x)
    }

    pub fn predict(&self, pair: CandidatePair) -> Result<f64, SurrogateError> {
        Ok(self.forward(normalize_input(pair, &self.input_norm)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 700,
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), SurrogateError> {
        if self.epochs == 0 {
            return Err(SurrogateError::InvalidConfig("epochs must be > 0"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(SurrogateError::InvalidConfig("learning rate must be > 0"));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(SurrogateError::InvalidConfig("decay rates must lie in [0, 1)"));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(SurrogateError::InvalidConfig("epsilon must be > 0"));
        }
        Ok(())
    }
}

/// One training point: a grid pair and its measured SSIM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub pair: CandidatePair,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: SurrogateModel,
    /// Full-batch loss (raw SSIM units) at the start of each epoch.
    pub loss_curve: Vec<f64>,
    /// Loss after the last update.
    pub final_loss: f64,
}

pub fn train(dataset: &[Sample], cfg: &TrainConfig) -> Result<TrainOutcome, SurrogateError> {
    cfg.validate()?;
    let distinct = dataset
        .iter()
        .enumerate()
        .any(|(i, a)| dataset[..i].iter().any(|b| b.pair != a.pair));
    if dataset.len() < 2 || !distinct {
        return Err(SurrogateError::EmptyDataset);
    }
    let norm = InputNorm {
        k1: FeatureRange::spanning(dataset.iter().map(|s| f64::from(s.pair.k1))).ok_or(SurrogateError::EmptyDataset)?,
        theta: FeatureRange::spanning(dataset.iter().map(|s| f64::from(s.pair.theta)))
            .ok_or(SurrogateError::EmptyDataset)?,
    };
    let xs = dataset
        .iter()
        .map(|s| normalize_input(s.pair, &norm))
        .collect::<Result<Vec<_>, _>>()?;
    // Fit standardized targets; the affine map is folded into the output layer afterwards.
    let raw: Vec<f64> = dataset.iter().map(|s| s.ssim).collect();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    let sd = libm::sqrt(raw.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / raw.len() as f64);
    let sd = if sd > 1e-12 { sd } else { 1.0 };
    let ys: Vec<f64> = raw.iter().map(|y| (y - mean) / sd).collect();

    let mut theta = Params::random(cfg.seed).to_flat();
    let mut m = [0.0; PARAM_COUNT];
    let mut v = [0.0; PARAM_COUNT];
    let (mut b1t, mut b2t) = (1.0, 1.0);
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let (loss, grad) = Params::from_flat(&theta).loss_and_gradient(&xs, &ys);
        loss_curve.push(loss * sd * sd);
        let grad = grad.to_flat();
        b1t *= cfg.beta1;
        b2t *= cfg.beta2;
        for i in 0..PARAM_COUNT {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            let m_hat = m[i] / (1.0 - b1t);
            let v_hat = v[i] / (1.0 - b2t);
            theta[i] -= cfg.learning_rate * m_hat / (libm::sqrt(v_hat) + cfg.epsilon);
        }
    }
    let mut params = Params::from_flat(&theta);
    for w in &mut params.w2 {
        *w *= sd;
    }
    params.b2 = mean + sd * params.b2;
    let final_loss = params.loss(&xs, &raw);
    Ok(TrainOutcome {
        model: SurrogateModel {
            params,
            input_norm: norm,
            seed: cfg.seed,
            epochs_trained: cfg.epochs,
        },
        loss_curve,
        final_loss,
    })
}

/// Linear-interpolation quantile of ascending `sorted` data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// SSIM band `(η11, η12)` as the `(q_lo, q_hi)` quantiles of the predicted
/// surface over `grid`.
pub fn derive_ssim_band(
    model: &SurrogateModel,
    grid: &[CandidatePair],
    quantiles: (f64, f64),
) -> Result<(f64, f64), SurrogateError> {
    let (q_lo, q_hi) = quantiles;
    if !(0.0 <= q_lo && q_lo < q_hi && q_hi <= 1.0) {
        return Err(SurrogateError::InvalidQuantiles(q_lo, q_hi));
    }
    if grid.is_empty() {
        return Err(SurrogateError::EmptyGrid);
    }
    let mut preds = grid
        .iter()
        .map(|&p| model.predict(p))
        .collect::<Result<Vec<_>, _>>()?;
    preds.sort_by(f64::total_cmp);
    Ok((quantile(&preds, q_lo), quantile(&preds, q_hi)))
}
