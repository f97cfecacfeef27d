#![allow(dead_code)]

use std::path::{Path, PathBuf};

use advsmo::config::{EndpointConfig, PipelineConfig};
use advsmo::io::save_image;
use advsmo_core::blackbox::StubRule;
use advsmo_core::search::ConstraintThresholds;
use advsmo_core::synthetic::stripe_set;

pub const STRIPE_SIZE: usize = 32;
pub const STRIPE_SEED: u64 = 7;
pub const FLIP_THRESHOLD: f64 = 60.5;

/// Writes `count` gratings as `<dir>/<class>/stripe_NN.png`; class 0 runs below 90 degrees, class 1 above.
pub fn write_stripe_dataset(dir: &Path, count: usize) -> Vec<(PathBuf, u32)> {
    stripe_set(count, STRIPE_SIZE, STRIPE_SEED)
        .into_iter()
        .enumerate()
        .map(|(i, (spec, img))| {
            let label = u32::from(spec.angle >= 90.0);
            let path = dir.join(label.to_string()).join(format!("stripe_{i:02}.png"));
            save_image(&img, &path).unwrap();
            (path, label)
        })
        .collect()
}

/// SSIM band as shipped; MSE and L∞ bands widened to what Gabor smoothing does to 32 px gratings.
pub fn stripe_thresholds() -> ConstraintThresholds {
    ConstraintThresholds {
        mse_lo: 0.005,
        mse_hi: 0.06,
        linf_lo: 19.81960784,
        linf_hi: 100.0,
        ..ConstraintThresholds::default()
    }
}

pub fn stripe_config(dataset: &Path, out: &Path) -> PipelineConfig {
    PipelineConfig {
        thresholds: stripe_thresholds(),
        endpoint: EndpointConfig::Stub {
            rule: StubRule::ThresholdFlip {
                threshold: FLIP_THRESHOLD,
            },
            classes: 2,
        },
        dataset_root: Some(dataset.to_path_buf()),
        output_root: out.to_path_buf(),
        ..PipelineConfig::default()
    }
}

pub fn write_config(path: &Path, cfg: &PipelineConfig) {
    std::fs::write(path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
}
