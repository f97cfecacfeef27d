//! Core algorithms for texture-smoothing adversarial examples.
//!
//! Benign images are smoothed with oriented, DC-normalized Gabor kernels over a
//! grid of `(k1, theta)` pairs. Each candidate is scored against the benign image
//! with SSIM, MSE and L∞; pairs whose scores fall strictly inside configured bands
//! form the valid set `U`. A black-box [`blackbox::Classifier`] then measures attack
//! success, optionally behind one of the [`defense`] filters.
//!
//! The crate is `no_std` (with `alloc`). File formats, HTTP and the CLI live in
//! the `advsmo` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod conv;

pub mod blackbox;
pub mod defense;
pub mod gabor;
pub mod image;
pub mod metrics;
pub mod search;
pub mod surrogate;
pub mod synthetic;
pub mod texture;

pub use blackbox::{AttackReport, Classifier, Verdict};
pub use defense::{apply_defense, Defense, DefenseKind};
pub use gabor::{extract_texture, gabor_kernel, rotate_coords, smooth, GaborDefaults, GaborParams, Kernel};
pub use image::{to_luma, Channel, Image};
pub use metrics::{linf, mse, ssim, MetricKind, MetricTriple, MetricValue};
pub use search::{CandidatePair, CandidateRecord, CandidateSet, ConstraintThresholds};
pub use surrogate::{SurrogateModel, TrainConfig};
pub use texture::{glcm, texture_diff, Glcm};
