//! Pipeline configuration: JSON on disk, validated as a whole at load time.

use std::fs;
use std::path::{Path, PathBuf};

use advsmo_core::blackbox::{StubRule, SuccessMode, DEFAULT_MAX_RETRIES};
use advsmo_core::defense::Defense;
use advsmo_core::gabor::GaborDefaults;
use advsmo_core::metrics::MetricKind;
use advsmo_core::search::{generate_grid, CandidatePair, ConstraintThresholds, SelectionPolicy, DEFAULT_K1, DEFAULT_THETA_STEP};
use advsmo_core::surrogate::{SurrogateError, TrainConfig};
use advsmo_core::texture::{Offset, DEFAULT_LEVELS};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const ENDPOINT_ENV: &str = "ADVSMO_ENDPOINT";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid config key `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

fn invalid(key: impl Into<String>, reason: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        reason: reason.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub k1: Vec<u32>,
    pub theta_step: u32,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            k1: DEFAULT_K1.to_vec(),
            theta_step: DEFAULT_THETA_STEP,
        }
    }
}

impl GridConfig {
    pub fn pairs(&self) -> Vec<CandidatePair> {
        generate_grid(&self.k1, self.theta_step).expect("grid validated at load")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EndpointConfig {
    /// In-process deterministic classifier keyed on the dataset's benign images.
    Stub {
        rule: StubRule,
        #[serde(default = "default_classes")]
        classes: u32,
    },
    Remote {
        url: String,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
        #[serde(default = "default_max_in_flight")]
        max_in_flight: usize,
    },
}

fn default_classes() -> u32 {
    2
}

fn default_timeout_ms() -> u64 {
    10_000
}

fn default_max_in_flight() -> usize {
    4
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig::Stub {
            rule: StubRule::ThresholdFlip { threshold: 10.0 },
            classes: default_classes(),
        }
    }
}

impl EndpointConfig {
    /// Points at `url`, keeping remote timeout and concurrency if already remote.
    pub fn with_url(&self, url: String) -> Self {
        match *self {
            EndpointConfig::Remote {
                timeout_ms,
                max_in_flight,
                ..
            } => EndpointConfig::Remote {
                url,
                timeout_ms,
                max_in_flight,
            },
            EndpointConfig::Stub { .. } => EndpointConfig::Remote {
                url,
                timeout_ms: default_timeout_ms(),
                max_in_flight: default_max_in_flight(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TextureConfig {
    pub offset: Offset,
    pub levels: usize,
    pub tile: usize,
    pub stride: usize,
}

impl Default for TextureConfig {
    fn default() -> Self {
        Self {
            offset: Offset::default(),
            levels: DEFAULT_LEVELS,
            tile: 8,
            stride: 4,
        }
    }
}

/// Surrogate training settings; the init seed is the pipeline `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Quantiles of the predicted surface that bound the derived SSIM band.
    pub quantiles: (f64, f64),
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            quantiles: (0.25, 0.75),
        }
    }
}

impl SurrogateConfig {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SurrogateError> {
        self.train_config(0).validate()?;
        let (lo, hi) = self.quantiles;
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(SurrogateError::InvalidQuantiles(lo, hi));
        }
        Ok(())
    }
}

/// Whether `U` is computed per benign image or shared across the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SetMode {
    #[default]
    PerImage,
    /// One pair for every image: the intersection of all per-image `U`, picked on mean SSIM.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub gabor: GaborDefaults,
    pub grid: GridConfig,
    pub thresholds: ConstraintThresholds,
    pub selection: SelectionPolicy,
    pub set_mode: SetMode,
    pub success_mode: SuccessMode,
    pub endpoint: EndpointConfig,
    pub max_retries: u32,
    pub defenses: Vec<Defense>,
    pub texture: TextureConfig,
    pub surrogate: SurrogateConfig,
    pub dataset_root: Option<PathBuf>,
    pub output_root: PathBuf,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            gabor: GaborDefaults::default(),
            grid: GridConfig::default(),
            thresholds: ConstraintThresholds::default(),
            selection: SelectionPolicy::default(),
            set_mode: SetMode::default(),
            success_mode: SuccessMode::default(),
            endpoint: EndpointConfig::default(),
            max_retries: DEFAULT_MAX_RETRIES,
            defenses: Defense::battery().to_vec(),
            texture: TextureConfig::default(),
            surrogate: SurrogateConfig::default(),
            dataset_root: None,
            output_root: PathBuf::from("out"),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: Self = serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every module precondition, naming the first offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.gabor.validate().map_err(|e| invalid("gabor", e))?;
        if self.grid.k1.is_empty() {
            return Err(invalid("grid.k1", "no kernel scales"));
        }
        if let Some(k) = self.grid.k1.iter().find(|&&k| k < 3 || k % 2 == 0) {
            return Err(invalid("grid.k1", format!("kernel scale {k} must be odd and >= 3")));
        }
        generate_grid(&self.grid.k1, self.grid.theta_step).map_err(|e| invalid("grid.theta_step", e))?;
        if let Err(advsmo_core::search::SearchError::InvalidBand { kind, .. }) = self.thresholds.validate() {
            let name = match kind {
                MetricKind::Ssim => "ssim",
                MetricKind::Mse => "mse",
                MetricKind::Linf => "linf",
            };
            return Err(invalid(format!("thresholds.{name}_lo"), "bounds must be finite with lo < hi"));
        }
        match &self.endpoint {
            EndpointConfig::Stub { rule, classes } => {
                if *classes < 2 {
                    return Err(invalid("endpoint.classes", "a stub needs at least two classes"));
                }
                if !rule.threshold().is_finite() {
                    return Err(invalid("endpoint.rule.threshold", "must be finite"));
                }
                if let StubRule::TextureDiffFlip { levels, .. } = rule {
                    if *levels < 2 {
                        return Err(invalid("endpoint.rule.levels", "need at least two levels"));
                    }
                }
            }
            EndpointConfig::Remote {
                url,
                timeout_ms,
                max_in_flight,
            } => {
                if !(url.starts_with("http://") || url.starts_with("https://")) || url.len() <= "https://".len() {
                    return Err(invalid("endpoint.url", format!("not an http(s) URL: {url:?}")));
                }
                if *timeout_ms == 0 {
                    return Err(invalid("endpoint.timeout_ms", "must be > 0"));
                }
                if *max_in_flight == 0 {
                    return Err(invalid("endpoint.max_in_flight", "must be > 0"));
                }
            }
        }
        for (i, d) in self.defenses.iter().enumerate() {
            d.validate().map_err(|e| invalid(format!("defenses[{i}]"), e))?;
        }
        if self.texture.levels < 2 {
            return Err(invalid("texture.levels", "need at least two levels"));
        }
        if self.texture.tile == 0 || self.texture.stride == 0 {
            return Err(invalid("texture.tile", "tile and stride must be > 0"));
        }
        self.surrogate.validate().map_err(|e| invalid("surrogate", e))?;
        Ok(())
    }

    /// Applies `ADVSMO_ENDPOINT` when set and non-empty.
    pub fn apply_env(mut self) -> Result<Self, ConfigError> {
        if let Some(url) = std::env::var(ENDPOINT_ENV).ok().filter(|u| !u.is_empty()) {
            self.endpoint = self.endpoint.with_url(url);
            self.validate()?;
        }
        Ok(self)
    }

    /// Canonical JSON; field order is fixed by the struct layout.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hex_digest(self.canonical_json().as_bytes())
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
