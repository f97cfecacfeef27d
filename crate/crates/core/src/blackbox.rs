//! Black-box classifier access and attack/evasion bookkeeping.
//!
//! A [`Classifier`] only ever returns a [`Verdict`] for an image. Nothing in
//! this interface exposes parameters, logits beyond the optional score list,
//! or gradients, so attacks built on it are black-box by construction.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::defense::{apply_defense, Defense, DefenseError};
use crate::image::{to_luma, Image};
use crate::metrics::{linf, MetricTriple};
use crate::search::CandidatePair;
use crate::texture::{texture_diff, Offset};

pub const DEFAULT_MAX_RETRIES: u32 = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifyError {
    #[error("classifier timed out")]
    Timeout,
    #[error("malformed classifier response: {0}")]
    Malformed(String),
    #[error("classifier returned HTTP status {0}")]
    Http(u16),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("stub classifier has no reference image of this shape")]
    NoReference,
}

impl ClassifyError {
    pub fn is_retriable(&self) -> bool {
        !matches!(self, ClassifyError::NoReference)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AttackError {
    #[error("no samples to evaluate")]
    Empty,
    #[error("all {0} samples went unevaluated")]
    AllUnevaluated(usize),
    #[error(transparent)]
    Defense(#[from] DefenseError),
}

/// A classifier's answer: predicted label and optional class probabilities.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Verdict {
    pub label: u32,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub scores: Option<Vec<f64>>,
}

impl Verdict {
    pub fn label(label: u32) -> Self {
        Self { label, scores: None }
    }

    /// Scores, when present, must be non-negative and sum to 1 within 1e-6.
    pub fn validate(&self) -> Result<(), ClassifyError> {
        if let Some(scores) = &self.scores {
            if scores.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                return Err(ClassifyError::Malformed("negative or non-finite score".into()));
            }
            let sum: f64 = scores.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(ClassifyError::Malformed(alloc::format!("scores sum to {sum}")));
            }
        }
        Ok(())
    }
}

/// Opaque access to a target model.
pub trait Classifier: Send + Sync {
    fn classify(&self, img: &Image) -> Result<Verdict, ClassifyError>;

    /// Called before retry number `attempt` (1-based). Remote clients sleep here.
    fn backoff(&self, _attempt: u32) {}
}

impl<C: Classifier + ?Sized> Classifier for &C {
    fn classify(&self, img: &Image) -> Result<Verdict, ClassifyError> {
        (**self).classify(img)
    }

    fn backoff(&self, attempt: u32) {
        (**self).backoff(attempt)
    }
}

/// Deterministic decision rules for in-process testing.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "rule", rename_all = "kebab-case"))]
pub enum StubRule {
    /// Flip when L∞ (0–255) to the nearest reference exceeds `threshold`.
    ThresholdFlip { threshold: f64 },
    /// Flip when the GLCM L1 distance of the luma planes exceeds `threshold`.
    TextureDiffFlip {
        threshold: f64,
        #[cfg_attr(feature = "serde", serde(default))]
        offset: Offset,
        #[cfg_attr(feature = "serde", serde(default = "default_levels"))]
        levels: usize,
    },
}

#[cfg(feature = "serde")]
fn default_levels() -> usize {
    crate::texture::DEFAULT_LEVELS
}

impl StubRule {
    pub fn threshold(&self) -> f64 {
        match *self {
            StubRule::ThresholdFlip { threshold } | StubRule::TextureDiffFlip { threshold, .. } => threshold,
        }
    }

    pub fn distance(&self, reference: &Image, img: &Image) -> Option<f64> {
        match *self {
            StubRule::ThresholdFlip { .. } => linf(reference, img).ok().map(|m| m.value),
            StubRule::TextureDiffFlip { offset, levels, .. } => {
                texture_diff(&to_luma(reference), &to_luma(img), offset, levels).ok()
            }
        }
    }
}

/// A stub that knows a labelled reference set. It matches the query to the
/// closest same-shaped reference under its rule's distance and answers that
/// reference's label, shifted to `(label + 1) mod classes` when the distance
/// exceeds the threshold.
#[derive(Debug, Clone)]
pub struct StubClassifier {
    rule: StubRule,
    classes: u32,
    references: Vec<(Image, u32)>,
}

impl StubClassifier {
    pub fn new(rule: StubRule, classes: u32, references: Vec<(Image, u32)>) -> Self {
        assert!(classes >= 2, "a stub needs at least two classes");
        Self {
            rule,
            classes,
            references,
        }
    }

    pub fn rule(&self) -> &StubRule {
        &self.rule
    }
}

impl Classifier for StubClassifier {
    fn classify(&self, img: &Image) -> Result<Verdict, ClassifyError> {
        let mut best: Option<(f64, u32)> = None;
        for (reference, label) in &self.references {
            if let Some(d) = self.rule.distance(reference, img) {
                if best.map_or(true, |(b, _)| d < b) {
                    best = Some((d, *label));
                }
            }
        }
        let (d, label) = best.ok_or(ClassifyError::NoReference)?;
        let label = if d > self.rule.threshold() {
            (label + 1) % self.classes
        } else {
            label
        };
        Ok(Verdict::label(label))
    }
}

/// What counts as a successful attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum SuccessMode {
    /// `ŷ != y` against the dataset label.
    #[default]
    GroundTruth,
    /// `ŷ` differs from the model's own prediction on the benign image.
    ModelRelative,
}

#[derive(Debug, Clone)]
pub struct AttackSample {
    pub id: String,
    pub label: u32,
    pub benign: Image,
    pub adversarial: Image,
    pub pair: Option<CandidatePair>,
    pub metrics: Option<MetricTriple>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SampleEntry {
    pub id: String,
    /// Ground-truth label `y`.
    pub label: u32,
    /// Model prediction on the benign image (model-relative mode only).
    pub benign_prediction: Option<u32>,
    /// `ŷ`, absent when the sample went unevaluated.
    pub adversarial_label: Option<u32>,
    pub success: Option<bool>,
    pub pair: Option<CandidatePair>,
    pub metrics: Option<MetricTriple>,
    pub queries: u32,
    pub retries: u32,
    pub failure: Option<String>,
}

impl SampleEntry {
    pub fn evaluated(&self) -> bool {
        self.success.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AttackReport {
    /// Per-sample outcomes, sorted by id.
    pub entries: Vec<SampleEntry>,
    pub defense: Option<Defense>,
    pub evaluated: usize,
    pub unevaluated: usize,
    pub successes: usize,
    /// `successes / evaluated`.
    pub asr: f64,
    /// Every classifier call, failed attempts included.
    pub query_count: u64,
    pub retries: u64,
}

impl AttackReport {
    pub fn from_entries(mut entries: Vec<SampleEntry>, defense: Option<Defense>) -> Result<Self, AttackError> {
        if entries.is_empty() {
            return Err(AttackError::Empty);
        }
        entries.sort_by(|a, b| a.id.cmp(&b.id));
        let evaluated = entries.iter().filter(|e| e.evaluated()).count();
        if evaluated == 0 {
            return Err(AttackError::AllUnevaluated(entries.len()));
        }
        let successes = entries.iter().filter(|e| e.success == Some(true)).count();
        Ok(Self {
            defense,
            evaluated,
            unevaluated: entries.len() - evaluated,
            successes,
            asr: successes as f64 / evaluated as f64,
            query_count: entries.iter().map(|e| u64::from(e.queries)).sum(),
            retries: entries.iter().map(|e| u64::from(e.retries)).sum(),
            entries,
        })
    }
}

/// Classifies with up to `max_retries` retries on retriable errors.
fn classify_with_retry<C: Classifier + ?Sized>(
    clf: &C,
    img: &Image,
    max_retries: u32,
    queries: &mut u32,
    retries: &mut u32,
) -> Result<Verdict, ClassifyError> {
    let mut attempt = 0;
    loop {
        *queries += 1;
        match clf.classify(img).and_then(|v| v.validate().map(|_| v)) {
            Ok(v) => return Ok(v),
            Err(e) if e.is_retriable() && attempt < max_retries => {
                attempt += 1;
                *retries += 1;
                clf.backoff(attempt);
            }
            Err(e) => return Err(e),
        }
    }
}

/// Evaluates one sample, optionally passing the adversarial image through `defense` first.
pub fn evaluate_sample<C: Classifier + ?Sized>(
    clf: &C,
    sample: &AttackSample,
    mode: SuccessMode,
    defense: Option<&Defense>,
    max_retries: u32,
) -> Result<SampleEntry, AttackError> {
    let adversarial = match defense {
        Some(d) => apply_defense(&sample.adversarial, d)?,
        None => sample.adversarial.clone(),
    };
    let mut entry = SampleEntry {
        id: sample.id.clone(),
        label: sample.label,
        benign_prediction: None,
        adversarial_label: None,
        success: None,
        pair: sample.pair,
        metrics: sample.metrics,
        queries: 0,
        retries: 0,
        failure: None,
    };
    let reference = match mode {
        SuccessMode::GroundTruth => sample.label,
        SuccessMode::ModelRelative => {
            match classify_with_retry(clf, &sample.benign, max_retries, &mut entry.queries, &mut entry.retries) {
                Ok(v) => {
                    entry.benign_prediction = Some(v.label);
                    v.label
                }
                Err(e) => {
                    entry.failure = Some(e.to_string());
                    return Ok(entry);
                }
            }
        }
    };
    match classify_with_retry(clf, &adversarial, max_retries, &mut entry.queries, &mut entry.retries) {
        Ok(v) => {
            entry.adversarial_label = Some(v.label);
            entry.success = Some(v.label != reference);
        }
        Err(e) => entry.failure = Some(e.to_string()),
    }
    Ok(entry)
}

/// Fraction of evaluated samples whose adversarial image is misclassified.
pub fn attack_success_rate<C: Classifier + ?Sized>(
    clf: &C,
    samples: &[AttackSample],
    mode: SuccessMode,
    max_retries: u32,
) -> Result<AttackReport, AttackError> {
    let entries = samples
        .iter()
        .map(|s| evaluate_sample(clf, s, mode, None, max_retries))
        .collect::<Result<Vec<_>, _>>()?;
    AttackReport::from_entries(entries, None)
}

/// Attack success rate after `defense` is applied to every adversarial image.
pub fn evasion_rate<C: Classifier + ?Sized>(
    clf: &C,
    samples: &[AttackSample],
    defense: &Defense,
    mode: SuccessMode,
    max_retries: u32,
) -> Result<AttackReport, AttackError> {
    defense.validate()?;
    let entries = samples
        .iter()
        .map(|s| evaluate_sample(clf, s, mode, Some(defense), max_retries))
        .collect::<Result<Vec<_>, _>>()?;
    AttackReport::from_entries(entries, Some(*defense))
}
