//! `advsmo` command line. Exit codes: 0 success, 1 usage or config error, 2 runtime failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use advsmo_core::blackbox::SuccessMode;
use advsmo_core::defense::{apply_defense, Defense, DefenseKind};
use advsmo_core::gabor::{extract_texture, gabor_kernel, smooth_with_kernel, GaborError};
use advsmo_core::image::{to_luma, Channel};
use advsmo_core::search::{CandidatePair, SelectionPolicy, THETA_MAX};
use advsmo_core::surrogate::{derive_ssim_band, train, Sample};
use advsmo_core::texture::{glcm, texture_diff, texture_heatmap, Offset};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::config::{hex_digest, ConfigError, PipelineConfig, SetMode};
use crate::export::{channel_csv, glcm_csv, kernel_csv, loss_csv, report_csv, surface_csv};
use crate::io::{encode_png, load_image, save_image, write_bytes, IoError};
use crate::manifest::{read_json, to_json_bytes, CandidateManifest, InputDigest, ManifestError, RunManifest, TOOL_VERSION};
use crate::pipeline::{
    build_target, classify_samples, load_dataset, run_attack, search_image, worker_pool, write_search, AttackSummary,
    DatasetItem, PipelineError,
};

#[derive(Debug, Parser)]
#[command(name = "advsmo", version, about = "Texture-smoothing adversarial example search")]
pub struct Cli {
    /// Worker threads for the data-parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Smooth one image with the Gabor kernel for (k1, theta).
    Smooth(SmoothArgs),
    /// Evaluate the whole grid on one image and write its candidate manifest.
    Search(SearchArgs),
    /// Search a labelled dataset, pick one example per image and measure the attack success rate.
    Attack(DatasetArgs),
    /// Apply a defense filter to one image, or measure evasion over a dataset.
    Defend(DefendArgs),
    /// Co-occurrence matrices, texture difference and texture-change heatmap.
    Glcm(GlcmArgs),
    /// Fit the (k1, theta) -> SSIM surrogate to candidate manifests.
    TrainSurrogate(TrainArgs),
    /// SSIM-surface heatmap and CSV tables from a candidate manifest.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SelectionArg {
    LeastPerceptible,
    First,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SuccessArg {
    GroundTruth,
    ModelRelative,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SetModeArg {
    PerImage,
    Global,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DefenseArg {
    Bilinear,
    Gaussian,
    Max,
    Mean,
    Median,
    Min,
}

/// Config file plus per-key overrides.
#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Pipeline config (JSON). Built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output root; overrides `output_root`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub ssim_lo: Option<f64>,
    #[arg(long)]
    pub ssim_hi: Option<f64>,
    #[arg(long)]
    pub mse_lo: Option<f64>,
    #[arg(long)]
    pub mse_hi: Option<f64>,
    #[arg(long)]
    pub linf_lo: Option<f64>,
    #[arg(long)]
    pub linf_hi: Option<f64>,
    /// Comma-separated odd kernel sides.
    #[arg(long, value_delimiter = ',')]
    pub k1: Option<Vec<u32>>,
    #[arg(long)]
    pub theta_step: Option<u32>,
    #[arg(long, value_enum)]
    pub selection: Option<SelectionArg>,
}

#[derive(Debug, Args)]
pub struct SmoothArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub k1: u32,
    #[arg(long)]
    pub theta: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Config whose `gabor` section supplies wavelength, phase, aspect and bandwidth.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Also write the kernel weights as CSV.
    #[arg(long)]
    pub kernel_csv: Option<PathBuf>,
    /// Also write the texture residual `(benign - smoothed + 1) / 2` as PNG.
    #[arg(long)]
    pub residual: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Dataset root laid out as `<root>/<class id>/*.png`; overrides `dataset_root`.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub success_mode: Option<SuccessArg>,
    #[arg(long, value_enum)]
    pub set_mode: Option<SetModeArg>,
    /// Classifier URL; takes precedence over ADVSMO_ENDPOINT and the config.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct DefendArgs {
    /// Single-image mode: filter this PNG and write it to `--out`.
    #[arg(long = "in", requires = "defense")]
    pub input: Option<PathBuf>,
    /// Filter to apply; in dataset mode, restricts the configured battery to this kind.
    #[arg(long, value_enum)]
    pub defense: Option<DefenseArg>,
    #[arg(long, default_value_t = 3)]
    pub window: usize,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[command(flatten)]
    pub data: DatasetArgs,
}

#[derive(Debug, Args)]
pub struct GlcmArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Second image; enables the texture difference and heatmap.
    #[arg(long)]
    pub against: Option<PathBuf>,
    #[arg(long, default_value_t = 1, allow_negative_numbers = true)]
    pub dx: isize,
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    pub dy: isize,
    #[arg(long, default_value_t = 8)]
    pub levels: usize,
    #[arg(long, default_value_t = 8)]
    pub tile: usize,
    #[arg(long, default_value_t = 4)]
    pub stride: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Candidate manifests to train on (repeatable).
    #[arg(long = "manifest", required = true)]
    pub manifests: Vec<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub q_lo: Option<f64>,
    #[arg(long)]
    pub q_hi: Option<f64>,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Heatmap pixels per grid cell.
    #[arg(long, default_value_t = 8)]
    pub cell: usize,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            _ => 2,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Parses `argv`, runs the subcommand and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    if cli.workers == Some(0) {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    let pool = worker_pool(cli.workers)?;
    pool.install(|| match cli.command {
        Command::Smooth(a) => smooth_cmd(a),
        Command::Search(a) => search_cmd(a),
        Command::Attack(a) => attack_cmd(a),
        Command::Defend(a) => defend_cmd(a),
        Command::Glcm(a) => glcm_cmd(a),
        Command::TrainSurrogate(a) => train_cmd(a),
        Command::Report(a) => report_cmd(a),
    })
}

fn resolve_config(args: &ConfigArgs) -> Result<(PipelineConfig, Vec<PathBuf>), CliError> {
    let mut cfg = match &args.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    let t = &mut cfg.thresholds;
    for (flag, slot) in [
        (args.ssim_lo, &mut t.ssim_lo),
        (args.ssim_hi, &mut t.ssim_hi),
        (args.mse_lo, &mut t.mse_lo),
        (args.mse_hi, &mut t.mse_hi),
        (args.linf_lo, &mut t.linf_lo),
        (args.linf_hi, &mut t.linf_hi),
    ] {
        if let Some(v) = flag {
            *slot = v;
        }
    }
    if let Some(k1) = &args.k1 {
        cfg.grid.k1 = k1.clone();
    }
    if let Some(step) = args.theta_step {
        cfg.grid.theta_step = step;
    }
    if let Some(out) = &args.out {
        cfg.output_root = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(sel) = args.selection {
        cfg.selection = match sel {
            SelectionArg::LeastPerceptible => SelectionPolicy::LeastPerceptible,
            SelectionArg::First => SelectionPolicy::First,
        };
    }
    cfg.validate()?;
    let cfg = cfg.apply_env()?;
    if let Some(cap) = cfg.thresholds.feasibility_conflict() {
        eprintln!(
            "warning: mse_lo {} >= (linf_hi / 255)^2 = {cap:.6}; no image can satisfy both bands, so U will be empty",
            cfg.thresholds.mse_lo
        );
    }
    Ok((cfg, args.config.iter().cloned().collect()))
}

fn resolve_dataset_config(args: &DatasetArgs) -> Result<(PipelineConfig, Vec<PathBuf>), CliError> {
    let (mut cfg, inputs) = resolve_config(&args.cfg)?;
    if let Some(d) = &args.dataset {
        cfg.dataset_root = Some(d.clone());
    }
    if let Some(m) = args.success_mode {
        cfg.success_mode = match m {
            SuccessArg::GroundTruth => SuccessMode::GroundTruth,
            SuccessArg::ModelRelative => SuccessMode::ModelRelative,
        };
    }
    if let Some(m) = args.set_mode {
        cfg.set_mode = match m {
            SetModeArg::PerImage => SetMode::PerImage,
            SetModeArg::Global => SetMode::Global,
        };
    }
    if let Some(url) = &args.endpoint {
        cfg.endpoint = cfg.endpoint.with_url(url.clone());
    }
    cfg.validate()?;
    if cfg.dataset_root.is_none() {
        return Err(CliError::Usage("a dataset is required: pass --dataset or set dataset_root".into()));
    }
    Ok((cfg, inputs))
}

fn digest_inputs(paths: &[PathBuf]) -> Result<Vec<InputDigest>, CliError> {
    paths
        .iter()
        .map(|p| {
            let bytes = fs::read(p).map_err(|source| IoError::Io {
                path: p.clone(),
                source,
            })?;
            Ok(InputDigest {
                path: p.display().to_string(),
                sha256: hex_digest(&bytes),
            })
        })
        .collect()
}

/// Writes `<out>/manifests/run-<command>.json`.
fn write_run_manifest(
    cfg: &PipelineConfig,
    command: &str,
    inputs: &[PathBuf],
    mut outputs: Vec<String>,
) -> Result<(), CliError> {
    let rel = format!("manifests/run-{command}.json");
    outputs.push(rel.clone());
    let manifest = RunManifest {
        tool_version: TOOL_VERSION.to_string(),
        command: command.to_string(),
        args: std::env::args().skip(1).collect(),
        config_hash: cfg.hash(),
        config: serde_json::to_value(cfg).map_err(runtime)?,
        inputs: digest_inputs(inputs)?,
        outputs,
    };
    write_bytes(&cfg.output_root.join(rel), &to_json_bytes(&manifest))?;
    Ok(())
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("image")
        .to_string()
}

fn smooth_cmd(a: SmoothArgs) -> Result<(), CliError> {
    let defaults = match &a.config {
        Some(p) => PipelineConfig::load(p)?.gabor,
        None => PipelineConfig::default().gabor,
    };
    if a.k1 < 3 || a.k1 % 2 == 0 {
        return Err(CliError::Usage(format!("--k1 must be odd and >= 3, got {}", a.k1)));
    }
    let img = load_image(&a.input)?;
    let params = defaults
        .params(a.k1 as usize, a.theta)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let kernel = gabor_kernel(&params).map_err(runtime)?;
    let smoothed = smooth_with_kernel(&img, &kernel).map_err(|e| match e {
        e @ GaborError::KernelLargerThanImage { .. } => CliError::Usage(e.to_string()),
        e => runtime(e),
    })?;
    save_image(&smoothed, &a.out)?;
    if let Some(path) = &a.kernel_csv {
        write_bytes(path, &kernel_csv(&kernel).map_err(runtime)?)?;
    }
    if let Some(path) = &a.residual {
        save_image(&extract_texture(&img, &smoothed).map_err(runtime)?, path)?;
    }
    Ok(())
}

fn search_cmd(a: SearchArgs) -> Result<(), CliError> {
    let (cfg, mut inputs) = resolve_config(&a.cfg)?;
    let img = load_image(&a.input)?;
    let stem = file_stem(&a.input);
    let search = search_image(&img, &a.input.display().to_string(), &stem, &cfg)?;
    let outputs = write_search(&cfg.output_root, &search)?;
    println!(
        "{}: {} pairs, |U_ssim| = {}, |U_mse| = {}, |U_linf| = {}, |U| = {}",
        a.input.display(),
        search.candidates.len(),
        search.sets.ssim.len(),
        search.sets.mse.len(),
        search.sets.linf.len(),
        search.sets.intersection.len()
    );
    inputs.push(a.input);
    write_run_manifest(&cfg, "search", &inputs, outputs)
}

fn dataset_inputs(cfg_inputs: Vec<PathBuf>, items: &[DatasetItem]) -> Vec<PathBuf> {
    cfg_inputs.into_iter().chain(items.iter().map(|i| i.path.clone())).collect()
}

fn attack_cmd(a: DatasetArgs) -> Result<(), CliError> {
    let (cfg, inputs) = resolve_dataset_config(&a)?;
    let items = load_dataset(cfg.dataset_root.as_deref().expect("checked"))?;
    let target = build_target(&cfg.endpoint, &items)?;
    let run = run_attack(&items, &cfg, &target)?;
    let mut outputs = Vec::new();
    for s in &run.searches {
        outputs.extend(write_search(&cfg.output_root, s)?);
    }
    let summary = AttackSummary {
        tool_version: TOOL_VERSION.to_string(),
        no_candidate: run.prepared.no_candidate.clone(),
        report: run.report.clone(),
    };
    outputs.extend(write_report(&cfg.output_root, "attack", &summary)?);
    println!(
        "ASR {:.4} ({} of {} evaluated, {} unevaluated, {} without a candidate, {} queries)",
        run.report.asr,
        run.report.successes,
        run.report.evaluated,
        run.report.unevaluated,
        run.prepared.no_candidate.len(),
        run.report.query_count
    );
    write_run_manifest(&cfg, "attack", &dataset_inputs(inputs, &items), outputs)
}

/// `reports/<name>.json` and `reports/<name>.csv`.
fn write_report(out: &Path, name: &str, summary: &AttackSummary) -> Result<Vec<String>, CliError> {
    let json = format!("reports/{name}.json");
    let csv = format!("reports/{name}.csv");
    write_bytes(&out.join(&json), &to_json_bytes(summary))?;
    write_bytes(&out.join(&csv), &report_csv(&summary.report).map_err(runtime)?)?;
    Ok(vec![json, csv])
}

fn defense_from(arg: DefenseArg, window: usize, sigma: f64) -> Defense {
    let kind = match arg {
        DefenseArg::Bilinear => DefenseKind::Bilinear,
        DefenseArg::Gaussian => DefenseKind::Gaussian { sigma },
        DefenseArg::Max => DefenseKind::Max,
        DefenseArg::Mean => DefenseKind::Mean,
        DefenseArg::Median => DefenseKind::Median,
        DefenseArg::Min => DefenseKind::Min,
    };
    Defense::new(kind, window)
}

#[derive(Serialize)]
struct EvasionRow {
    defense: String,
    evaluated: usize,
    successes: usize,
    asr: f64,
}

fn defend_cmd(a: DefendArgs) -> Result<(), CliError> {
    if let Some(input) = &a.input {
        let d = defense_from(a.defense.expect("clap requires --defense"), a.window, a.sigma);
        d.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let out = a
            .data
            .cfg
            .out
            .as_ref()
            .ok_or_else(|| CliError::Usage("--out <PNG> is required with --in".into()))?;
        let img = load_image(input)?;
        save_image(&apply_defense(&img, &d).map_err(runtime)?, out)?;
        return Ok(());
    }
    let (cfg, inputs) = resolve_dataset_config(&a.data)?;
    let defenses: Vec<Defense> = match a.defense {
        Some(arg) => vec![defense_from(arg, a.window, a.sigma)],
        None => cfg.defenses.clone(),
    };
    for d in &defenses {
        d.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let items = load_dataset(cfg.dataset_root.as_deref().expect("checked"))?;
    let target = build_target(&cfg.endpoint, &items)?;
    let run = run_attack(&items, &cfg, &target)?;
    let mut outputs = Vec::new();
    let mut rows = vec![EvasionRow {
        defense: "none".into(),
        evaluated: run.report.evaluated,
        successes: run.report.successes,
        asr: run.report.asr,
    }];
    for d in &defenses {
        let report = classify_samples(&target, &run.prepared.samples, &cfg, Some(d))?;
        rows.push(EvasionRow {
            defense: d.to_string(),
            evaluated: report.evaluated,
            successes: report.successes,
            asr: report.asr,
        });
        let summary = AttackSummary {
            tool_version: TOOL_VERSION.to_string(),
            no_candidate: run.prepared.no_candidate.clone(),
            report,
        };
        outputs.extend(write_report(&cfg.output_root, &format!("evasion-{d}"), &summary)?);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &rows {
        w.serialize(row).map_err(runtime)?;
        println!("{:<16} ASR {:.4} ({}/{})", row.defense, row.asr, row.successes, row.evaluated);
    }
    write_bytes(&cfg.output_root.join("reports/evasion.csv"), &w.into_inner().map_err(runtime)?)?;
    outputs.push("reports/evasion.csv".into());
    write_run_manifest(&cfg, "defend", &dataset_inputs(inputs, &items), outputs)
}

#[derive(Serialize)]
struct TextureSummary {
    offset: Offset,
    levels: usize,
    texture_diff: f64,
}

fn glcm_cmd(a: GlcmArgs) -> Result<(), CliError> {
    let offset = Offset::new(a.dx, a.dy);
    let usage = |e: advsmo_core::texture::TextureError| CliError::Usage(e.to_string());
    let img = to_luma(&load_image(&a.input)?);
    let mut outputs = Vec::new();
    let mut emit = |rel: String, bytes: Vec<u8>| -> Result<(), CliError> {
        write_bytes(&a.out.join(&rel), &bytes)?;
        outputs.push(rel);
        Ok(())
    };
    let stem = file_stem(&a.input);
    let g = glcm(&img, offset, a.levels).map_err(usage)?;
    emit(format!("reports/{stem}.glcm.csv"), glcm_csv(&g).map_err(runtime)?)?;
    let mut inputs = vec![a.input.clone()];
    if let Some(other) = &a.against {
        let adv = to_luma(&load_image(other)?);
        let other_stem = file_stem(other);
        let g2 = glcm(&adv, offset, a.levels).map_err(usage)?;
        emit(format!("reports/{other_stem}.glcm.csv"), glcm_csv(&g2).map_err(runtime)?)?;
        let diff = texture_diff(&img, &adv, offset, a.levels).map_err(usage)?;
        println!("texture_diff {diff}");
        let summary = TextureSummary {
            offset,
            levels: a.levels,
            texture_diff: diff,
        };
        emit(format!("reports/{stem}.vs.{other_stem}.texture.json"), to_json_bytes(&summary))?;
        let heat = texture_heatmap(&img, &adv, offset, a.levels, a.tile, a.stride).map_err(usage)?;
        emit(format!("reports/{stem}.vs.{other_stem}.heatmap.csv"), channel_csv(&heat).map_err(runtime)?)?;
        emit(format!("images/{stem}.vs.{other_stem}.heatmap.png"), encode_png(&heat.into_image())?)?;
        inputs.push(other.clone());
    }
    let cfg = PipelineConfig {
        output_root: a.out.clone(),
        texture: crate::config::TextureConfig {
            offset,
            levels: a.levels,
            tile: a.tile,
            stride: a.stride,
        },
        ..PipelineConfig::default()
    };
    write_run_manifest(&cfg, "glcm", &inputs, outputs)
}

#[derive(Serialize)]
struct BandSummary {
    quantiles: (f64, f64),
    ssim_lo: f64,
    ssim_hi: f64,
    samples: usize,
    final_rmse: f64,
}

fn train_cmd(a: TrainArgs) -> Result<(), CliError> {
    let (mut cfg, mut inputs) = resolve_config(&a.cfg)?;
    if let Some(e) = a.epochs {
        cfg.surrogate.epochs = e;
    }
    if let Some(q) = a.q_lo {
        cfg.surrogate.quantiles.0 = q;
    }
    if let Some(q) = a.q_hi {
        cfg.surrogate.quantiles.1 = q;
    }
    cfg.validate()?;
    let mut samples = Vec::new();
    let mut grid = std::collections::BTreeSet::new();
    for path in &a.manifests {
        let m: CandidateManifest = read_json(path)?;
        for r in m.records() {
            grid.insert(r.pair);
            if let Some(metrics) = r.metrics() {
                samples.push(Sample {
                    pair: r.pair,
                    ssim: metrics.ssim,
                });
            }
        }
        inputs.push(path.clone());
    }
    let outcome = train(&samples, &cfg.surrogate.train_config(cfg.seed)).map_err(runtime)?;
    let grid: Vec<CandidatePair> = grid.into_iter().collect();
    let (lo, hi) = derive_ssim_band(&outcome.model, &grid, cfg.surrogate.quantiles).map_err(runtime)?;
    let out = &cfg.output_root;
    write_bytes(&out.join("reports/surrogate.json"), &to_json_bytes(&outcome.model))?;
    write_bytes(&out.join("reports/surrogate-loss.csv"), &loss_csv(&outcome.loss_curve).map_err(runtime)?)?;
    let band = BandSummary {
        quantiles: cfg.surrogate.quantiles,
        ssim_lo: lo,
        ssim_hi: hi,
        samples: samples.len(),
        final_rmse: outcome.final_loss.sqrt(),
    };
    write_bytes(&out.join("reports/ssim-band.json"), &to_json_bytes(&band))?;
    println!(
        "trained on {} samples, RMSE {:.5}; SSIM band ({lo:.6}, {hi:.6})",
        band.samples, band.final_rmse
    );
    let outputs = ["reports/surrogate.json", "reports/surrogate-loss.csv", "reports/ssim-band.json"]
        .map(String::from)
        .to_vec();
    write_run_manifest(&cfg, "train-surrogate", &inputs, outputs)
}

/// Rows are kernel sides, columns are angles; measured SSIM is min-max scaled, skipped cells stay black.
pub fn ssim_surface_image(m: &CandidateManifest, cell: usize) -> Result<Channel, CliError> {
    let ks: Vec<u32> = {
        let mut ks: Vec<u32> = m.records.iter().map(|r| r.k1).collect();
        ks.sort_unstable();
        ks.dedup();
        ks
    };
    let thetas: Vec<u32> = (0..=THETA_MAX).step_by(m.grid.theta_step.max(1) as usize).collect();
    let values: Vec<f64> = m.records.iter().filter_map(|r| r.ssim).collect();
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let at = |row: usize, col: usize| -> f64 {
        m.records
            .iter()
            .find(|r| r.k1 == ks[row] && r.theta == thetas[col])
            .and_then(|r| r.ssim)
            .map_or(0.0, |s| ((s - lo) / span).clamp(0.0, 1.0))
    };
    Channel::from_fn(thetas.len() * cell, ks.len() * cell, |x, y| at(y / cell, x / cell)).map_err(runtime)
}

fn report_cmd(a: ReportArgs) -> Result<(), CliError> {
    if a.cell == 0 {
        return Err(CliError::Usage("--cell must be at least 1".into()));
    }
    let m: CandidateManifest = read_json(&a.manifest)?;
    let stem = file_stem(&a.manifest);
    let stem = stem.trim_end_matches(".candidates");
    let heat = ssim_surface_image(&m, a.cell)?;
    let mut outputs = Vec::new();
    let png = format!("images/{stem}.ssim-surface.png");
    write_bytes(&a.out.join(&png), &encode_png(&heat.into_image())?)?;
    outputs.push(png);
    let table = format!("reports/{stem}.surface.csv");
    write_bytes(&a.out.join(&table), &surface_csv(&m.records()).map_err(runtime)?)?;
    outputs.push(table);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["set", "k1", "theta"]).map_err(runtime)?;
    for (name, set) in [
        ("ssim", &m.sets.ssim),
        ("mse", &m.sets.mse),
        ("linf", &m.sets.linf),
        ("intersection", &m.sets.intersection),
    ] {
        for p in set {
            w.write_record([name.to_string(), p.k1.to_string(), p.theta.to_string()])
                .map_err(runtime)?;
        }
    }
    let sets = format!("reports/{stem}.sets.csv");
    write_bytes(&a.out.join(&sets), &w.into_inner().map_err(runtime)?)?;
    outputs.push(sets);
    let cfg = PipelineConfig {
        output_root: a.out.clone(),
        gabor: m.gabor_defaults,
        grid: m.grid.clone(),
        thresholds: m.thresholds,
        ..PipelineConfig::default()
    };
    write_run_manifest(&cfg, "report", &[a.manifest.clone()], outputs)
}
