//! Command-line pipeline around `advsmo-core`: PNG IO, JSON manifests and
//! configuration, CSV exports and an HTTP client for remote classifiers.

pub mod cli;
pub mod config;
pub mod export;
pub mod io;
pub mod manifest;
pub mod pipeline;
pub mod remote;

pub use config::PipelineConfig;
pub use io::{load_image, save_image};
