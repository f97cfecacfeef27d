//! Candidate grid, the initial adversarial example set, and the three-metric
//! constraint that narrows it to the valid set `U`.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::gabor::{smooth, GaborDefaults, GaborError};
use crate::image::Image;
use crate::metrics::{MetricError, MetricKind, MetricTriple};

/// Default kernel sides searched.
pub const DEFAULT_K1: [u32; 7] = [3, 5, 7, 9, 11, 13, 15];
pub const DEFAULT_THETA_STEP: u32 = 5;
/// Orientations are searched on `[0, 90]` only.
pub const THETA_MAX: u32 = 90;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    #[error("empty search range: {0}")]
    EmptyRange(&'static str),
    #[error("kernel scale {0} must be odd and >= 3")]
    InvalidK1(u32),
    #[error("invalid band for {kind}: lo {lo} must be < hi {hi}")]
    InvalidBand { kind: MetricKind, lo: f64, hi: f64 },
    #[error("intersection needs at least one set")]
    NoSets,
    #[error("candidate set is empty")]
    EmptySet,
    #[error("no measured record for pair {0}")]
    MissingRecord(CandidatePair),
    #[error(transparent)]
    Gabor(#[from] GaborError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// One `(k1, theta)` grid point; `theta` in whole degrees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CandidatePair {
    pub k1: u32,
    pub theta: u32,
}

impl CandidatePair {
    pub const fn new(k1: u32, theta: u32) -> Self {
        Self { k1, theta }
    }
}

impl fmt::Display for CandidatePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.k1, self.theta)
    }
}

/// Odd kernel sides `min, min + 2, ..., max`.
pub fn odd_range(min: u32, max: u32) -> Vec<u32> {
    let start = if min % 2 == 0 { min + 1 } else { min };
    (start..=max).step_by(2).collect()
}

/// Cartesian product of `k1_values` with `theta ∈ {0, step, ..., 90}`, ascending.
pub fn generate_grid(k1_values: &[u32], theta_step: u32) -> Result<Vec<CandidatePair>, SearchError> {
    if k1_values.is_empty() {
        return Err(SearchError::EmptyRange("no kernel scales"));
    }
    if theta_step == 0 || THETA_MAX % theta_step != 0 {
        return Err(SearchError::EmptyRange("theta step must divide 90"));
    }
    if let Some(&k) = k1_values.iter().find(|&&k| k < 3 || k % 2 == 0) {
        return Err(SearchError::InvalidK1(k));
    }
    let ks: BTreeSet<u32> = k1_values.iter().copied().collect();
    Ok(ks
        .into_iter()
        .flat_map(|k1| (0..=THETA_MAX).step_by(theta_step as usize).map(move |theta| CandidatePair { k1, theta }))
        .collect())
}

/// Open interval `(lo, hi)`; infinite ends act as "unbounded".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub const UNBOUNDED: Band = Band {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Option<Self> {
        (lo < hi).then_some(Self { lo, hi })
    }

    /// Strict on both sides.
    pub fn contains(&self, v: f64) -> bool {
        self.lo < v && v < self.hi
    }
}

/// Bounds on SSIM (unit), MSE (unit) and L∞ (0–255).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct ConstraintThresholds {
    pub ssim_lo: f64,
    pub ssim_hi: f64,
    pub mse_lo: f64,
    pub mse_hi: f64,
    pub linf_lo: f64,
    pub linf_hi: f64,
}

impl Default for ConstraintThresholds {
    fn default() -> Self {
        Self {
            ssim_lo: 0.077444225,
            ssim_hi: 0.132868965,
            mse_lo: 0.020213895,
            mse_hi: 0.038001586,
            linf_lo: 19.81960784,
            linf_hi: 27.19215686,
        }
    }
}

impl ConstraintThresholds {
    pub fn band(&self, kind: MetricKind) -> Band {
        let (lo, hi) = match kind {
            MetricKind::Ssim => (self.ssim_lo, self.ssim_hi),
            MetricKind::Mse => (self.mse_lo, self.mse_hi),
            MetricKind::Linf => (self.linf_lo, self.linf_hi),
        };
        Band { lo, hi }
    }

    /// Checks finiteness and `lo < hi`, naming the first bad metric.
    pub fn validate(&self) -> Result<(), SearchError> {
        for kind in MetricKind::ALL {
            let b = self.band(kind);
            if !(b.lo.is_finite() && b.hi.is_finite() && b.lo < b.hi) {
                return Err(SearchError::InvalidBand {
                    kind,
                    lo: b.lo,
                    hi: b.hi,
                });
            }
        }
        Ok(())
    }

    /// Since `MSE <= (L∞ / 255)^2`, the MSE and L∞ bands cannot both be met when
    /// `mse_lo >= (linf_hi / 255)^2`. Returns that bound when it bites.
    pub fn feasibility_conflict(&self) -> Option<f64> {
        let cap = (self.linf_hi / 255.0) * (self.linf_hi / 255.0);
        (self.mse_lo >= cap).then_some(cap)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Measurement {
    Measured(MetricTriple),
    /// The pair could not be evaluated for this image; the reason is kept for the manifest.
    Skipped(String),
}

/// One grid point of the initial set and its distances to the benign image.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateRecord {
    pub pair: CandidatePair,
    pub measurement: Measurement,
}

impl CandidateRecord {
    pub fn metrics(&self) -> Option<&MetricTriple> {
        match &self.measurement {
            Measurement::Measured(m) => Some(m),
            Measurement::Skipped(_) => None,
        }
    }
}

/// A record together with its generated image (absent when skipped).
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub record: CandidateRecord,
    pub image: Option<Image>,
}

/// Storage precision of candidate images before they are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    Float,
    /// Measure what an 8-bit PNG of the candidate reads back as.
    EightBit,
}

/// Smooths `benign` with the kernel for `pair` and measures the result.
/// A kernel that cannot be built or does not fit yields a skipped record.
pub fn evaluate_pair(
    benign: &Image,
    pair: CandidatePair,
    defaults: &GaborDefaults,
    precision: Precision,
) -> Result<Candidate, SearchError> {
    let smoothed = defaults
        .params(pair.k1 as usize, f64::from(pair.theta))
        .and_then(|p| smooth(benign, &p));
    let image = match smoothed {
        Ok(img) => match precision {
            Precision::Float => img,
            Precision::EightBit => img.quantized(),
        },
        Err(e @ (GaborError::KernelLargerThanImage { .. } | GaborError::DegenerateKernel { .. })) => {
            return Ok(Candidate {
                record: CandidateRecord {
                    pair,
                    measurement: Measurement::Skipped(alloc::format!("{e}")),
                },
                image: None,
            })
        }
        Err(e) => return Err(e.into()),
    };
    let metrics = MetricTriple::measure(benign, &image)?;
    Ok(Candidate {
        record: CandidateRecord {
            pair,
            measurement: Measurement::Measured(metrics),
        },
        image: Some(image),
    })
}

/// The initial adversarial example set: one candidate per grid pair, in grid order.
pub fn build_initial_set(
    benign: &Image,
    grid: &[CandidatePair],
    defaults: &GaborDefaults,
) -> Result<Vec<Candidate>, SearchError> {
    grid.iter()
        .map(|&pair| evaluate_pair(benign, pair, defaults, Precision::Float))
        .collect()
}

/// Which filter produced a set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Metric(MetricKind),
    Intersection,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    pub pairs: BTreeSet<CandidatePair>,
    pub provenance: Provenance,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, pair: &CandidatePair) -> bool {
        self.pairs.contains(pair)
    }

    pub fn to_vec(&self) -> Vec<CandidatePair> {
        self.pairs.iter().copied().collect()
    }
}

/// Pairs whose `kind` metric lies strictly inside `band`. Skipped records never pass.
pub fn filter_by_metric(records: &[CandidateRecord], kind: MetricKind, band: Band) -> CandidateSet {
    let pairs = records
        .iter()
        .filter_map(|r| r.metrics().filter(|m| band.contains(m.get(kind))).map(|_| r.pair))
        .collect();
    CandidateSet {
        pairs,
        provenance: Provenance::Metric(kind),
    }
}

pub fn intersect(sets: &[CandidateSet]) -> Result<CandidateSet, SearchError> {
    let (first, rest) = sets.split_first().ok_or(SearchError::NoSets)?;
    let pairs = first
        .pairs
        .iter()
        .filter(|p| rest.iter().all(|s| s.pairs.contains(p)))
        .copied()
        .collect();
    Ok(CandidateSet {
        pairs,
        provenance: Provenance::Intersection,
    })
}

/// `U_SSIM`, `U_MSE`, `U_L∞` and their intersection `U`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstrainedSets {
    pub ssim: CandidateSet,
    pub mse: CandidateSet,
    pub linf: CandidateSet,
    pub intersection: CandidateSet,
}

pub fn constrain(records: &[CandidateRecord], thresholds: &ConstraintThresholds) -> ConstrainedSets {
    let [ssim, mse, linf] =
        MetricKind::ALL.map(|kind| filter_by_metric(records, kind, thresholds.band(kind)));
    let intersection = intersect(&[ssim.clone(), mse.clone(), linf.clone()]).expect("three sets");
    ConstrainedSets {
        ssim,
        mse,
        linf,
        intersection,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum SelectionPolicy {
    /// Highest SSIM; ties go to the smaller `k1`, then the smaller `theta`.
    #[default]
    LeastPerceptible,
    /// First pair in grid order.
    First,
}

pub fn select_pair(
    u: &CandidateSet,
    records: &[CandidateRecord],
    policy: SelectionPolicy,
) -> Result<CandidatePair, SearchError> {
    match policy {
        SelectionPolicy::First => u.pairs.first().copied().ok_or(SearchError::EmptySet),
        SelectionPolicy::LeastPerceptible => {
            let mut best: Option<(f64, CandidatePair)> = None;
            // ascending pair order, so a strict `>` keeps the smaller pair on ties
            for &pair in &u.pairs {
                let ssim = records
                    .iter()
                    .find(|r| r.pair == pair)
                    .and_then(|r| r.metrics())
                    .ok_or(SearchError::MissingRecord(pair))?
                    .ssim;
                if best.map_or(true, |(s, _)| ssim > s) {
                    best = Some((ssim, pair));
                }
            }
            best.map(|(_, p)| p).ok_or(SearchError::EmptySet)
        }
    }
}
