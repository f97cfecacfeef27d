//! JSON documents written by the pipeline. Struct field order is the on-disk order.

use std::fs;
use std::path::Path;

use advsmo_core::gabor::GaborDefaults;
use advsmo_core::metrics::MetricTriple;
use advsmo_core::search::{
    CandidatePair, CandidateRecord, ConstrainedSets, ConstraintThresholds, Measurement,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::GridConfig;
use crate::io::{write_bytes, IoError};

pub const TOOL_VERSION: &str = concat!("advsmo ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Write(#[from] IoError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordEntry {
    pub k1: u32,
    pub theta: u32,
    pub ssim: Option<f64>,
    pub mse: Option<f64>,
    pub linf: Option<f64>,
    /// Candidate PNG relative to the output root.
    pub image_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

impl RecordEntry {
    pub fn pair(&self) -> CandidatePair {
        CandidatePair::new(self.k1, self.theta)
    }

    pub fn to_record(&self) -> CandidateRecord {
        let measurement = match (self.ssim, self.mse, self.linf, &self.skipped) {
            (Some(ssim), Some(mse), Some(linf), None) => Measurement::Measured(MetricTriple { ssim, mse, linf }),
            (_, _, _, reason) => Measurement::Skipped(reason.clone().unwrap_or_default()),
        };
        CandidateRecord {
            pair: self.pair(),
            measurement,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetsEntry {
    pub ssim: Vec<CandidatePair>,
    pub mse: Vec<CandidatePair>,
    pub linf: Vec<CandidatePair>,
    pub intersection: Vec<CandidatePair>,
}

impl From<&ConstrainedSets> for SetsEntry {
    fn from(s: &ConstrainedSets) -> Self {
        Self {
            ssim: s.ssim.to_vec(),
            mse: s.mse.to_vec(),
            linf: s.linf.to_vec(),
            intersection: s.intersection.to_vec(),
        }
    }
}

/// Everything measured for one benign image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateManifest {
    pub benign_path: String,
    pub gabor_defaults: GaborDefaults,
    pub grid: GridConfig,
    pub records: Vec<RecordEntry>,
    pub sets: SetsEntry,
    pub thresholds: ConstraintThresholds,
    pub tool_version: String,
}

impl CandidateManifest {
    pub fn records(&self) -> Vec<CandidateRecord> {
        self.records.iter().map(RecordEntry::to_record).collect()
    }

    pub fn image_ref(&self, pair: CandidatePair) -> Option<&str> {
        self.records
            .iter()
            .find(|r| r.pair() == pair)
            .and_then(|r| r.image_ref.as_deref())
    }
}

/// Image path relative to the output root for one candidate.
pub fn candidate_image_ref(stem: &str, pair: CandidatePair) -> String {
    format!("images/{stem}/k{}_t{}.png", pair.k1, pair.theta)
}

pub fn record_entry(record: &CandidateRecord, image_ref: Option<String>) -> RecordEntry {
    let (m, skipped) = match &record.measurement {
        Measurement::Measured(m) => (Some(*m), None),
        Measurement::Skipped(reason) => (None, Some(reason.clone())),
    };
    RecordEntry {
        k1: record.pair.k1,
        theta: record.pair.theta,
        ssim: m.map(|m| m.ssim),
        mse: m.map(|m| m.mse),
        linf: m.map(|m| m.linf),
        image_ref: m.and(image_ref),
        skipped,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Enough to replay a run: the argv, the resolved config, input digests and what was written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub args: Vec<String>,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
}

/// Pretty JSON with a trailing newline.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("manifest types serialize");
    out.push(b'\n');
    out
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ManifestError> {
    Ok(write_bytes(path, &to_json_bytes(value))?)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ManifestError> {
    let text = fs::read_to_string(path).map_err(|source| ManifestError::Read {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ManifestError::Parse {
        path: path.display().to_string(),
        source,
    })
}
