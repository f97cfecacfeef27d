//! Search, selection and classification over a labelled image set.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use advsmo_core::blackbox::{
    evaluate_sample, AttackError, AttackReport, AttackSample, Classifier, ClassifyError, StubClassifier,
};
use advsmo_core::defense::{Defense, DefenseError};
use advsmo_core::image::Image;
use advsmo_core::metrics::MetricTriple;
use advsmo_core::search::{
    constrain, evaluate_pair, intersect, select_pair, Candidate, CandidatePair, CandidateRecord, CandidateSet,
    ConstrainedSets, Measurement, Precision, SearchError,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{EndpointConfig, PipelineConfig, SetMode};
use crate::io::{encode_png, load_image, write_bytes, IoError};
use crate::manifest::{
    candidate_image_ref, record_entry, write_json, CandidateManifest, ManifestError, SetsEntry, TOOL_VERSION,
};
use crate::remote::HttpClassifier;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Defense(#[from] DefenseError),
    #[error("classifier unavailable: {0}")]
    Classifier(#[from] ClassifyError),
    #[error("dataset {path}: {reason}")]
    Dataset { path: PathBuf, reason: String },
    #[error("worker pool: {0}")]
    Pool(String),
}

/// One labelled benign image.
#[derive(Debug, Clone)]
pub struct DatasetItem {
    /// `<class>/<file stem>`
    pub id: String,
    pub label: u32,
    pub path: PathBuf,
    pub image: Image,
}

impl DatasetItem {
    /// Filesystem-safe form of the id.
    pub fn stem(&self) -> String {
        self.id.replace('/', "_")
    }
}

/// Reads `<root>/<class id>/*.png`, ordered by class then file name.
pub fn load_dataset(root: &Path) -> Result<Vec<DatasetItem>, PipelineError> {
    let err = |path: &Path, reason: String| PipelineError::Dataset {
        path: path.to_path_buf(),
        reason,
    };
    let mut classes = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| err(root, e.to_string()))? {
        let path = entry.map_err(|e| err(root, e.to_string()))?.path();
        if !path.is_dir() {
            continue;
        }
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let label: u32 = name
            .parse()
            .map_err(|_| err(&path, "class directories must be named by integer id".into()))?;
        classes.push((label, path));
    }
    classes.sort();
    let mut items = Vec::new();
    for (label, dir) in classes {
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| err(&dir, e.to_string()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
            .collect();
        files.sort();
        for path in files {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            items.push(DatasetItem {
                id: format!("{label}/{stem}"),
                label,
                image: load_image(&path)?,
                path,
            });
        }
    }
    if items.is_empty() {
        return Err(err(root, "no PNG images found".into()));
    }
    Ok(items)
}

pub fn worker_pool(workers: Option<usize>) -> Result<rayon::ThreadPool, PipelineError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| PipelineError::Pool(e.to_string()))
}

/// Candidates, constrained sets and manifest for one benign image.
#[derive(Debug, Clone)]
pub struct ImageSearch {
    pub stem: String,
    pub candidates: Vec<Candidate>,
    pub sets: ConstrainedSets,
    pub manifest: CandidateManifest,
}

impl ImageSearch {
    pub fn records(&self) -> Vec<CandidateRecord> {
        self.candidates.iter().map(|c| c.record.clone()).collect()
    }

    pub fn candidate(&self, pair: CandidatePair) -> Option<&Candidate> {
        self.candidates.iter().find(|c| c.record.pair == pair)
    }
}

/// Evaluates every grid pair (in parallel on the current pool) on 8-bit candidates.
pub fn search_image(
    benign: &Image,
    benign_path: &str,
    stem: &str,
    cfg: &PipelineConfig,
) -> Result<ImageSearch, PipelineError> {
    let grid = cfg.grid.pairs();
    let candidates = grid
        .par_iter()
        .map(|&pair| evaluate_pair(benign, pair, &cfg.gabor, Precision::EightBit))
        .collect::<Result<Vec<_>, _>>()?;
    let records: Vec<CandidateRecord> = candidates.iter().map(|c| c.record.clone()).collect();
    let sets = constrain(&records, &cfg.thresholds);
    let manifest = CandidateManifest {
        benign_path: benign_path.to_string(),
        gabor_defaults: cfg.gabor,
        grid: cfg.grid.clone(),
        records: records
            .iter()
            .map(|r| record_entry(r, Some(candidate_image_ref(stem, r.pair))))
            .collect(),
        sets: SetsEntry::from(&sets),
        thresholds: cfg.thresholds,
        tool_version: TOOL_VERSION.to_string(),
    };
    Ok(ImageSearch {
        stem: stem.to_string(),
        candidates,
        sets,
        manifest,
    })
}

pub fn manifest_path(out: &Path, stem: &str) -> PathBuf {
    out.join("manifests").join(format!("{stem}.candidates.json"))
}

/// Writes every measured candidate PNG and the candidate manifest; returns paths relative to `out`.
pub fn write_search(out: &Path, search: &ImageSearch) -> Result<Vec<String>, PipelineError> {
    let encoded = search
        .candidates
        .par_iter()
        .filter_map(|c| c.image.as_ref().map(|img| (c.record.pair, img)))
        .map(|(pair, img)| encode_png(img).map(|png| (candidate_image_ref(&search.stem, pair), png)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut written = Vec::with_capacity(encoded.len() + 1);
    for (rel, png) in encoded {
        write_bytes(&out.join(&rel), &png)?;
        written.push(rel);
    }
    write_json(&manifest_path(out, &search.stem), &search.manifest)?;
    written.push(format!("manifests/{}.candidates.json", search.stem));
    Ok(written)
}

/// `U` shared by every image, with records carrying the mean metrics across images.
fn global_selection(searches: &[ImageSearch], cfg: &PipelineConfig) -> Result<Option<CandidatePair>, SearchError> {
    let sets: Vec<CandidateSet> = searches.iter().map(|s| s.sets.intersection.clone()).collect();
    let shared = intersect(&sets)?;
    let n = searches.len() as f64;
    let mean_records: Vec<CandidateRecord> = shared
        .pairs
        .iter()
        .map(|&pair| {
            let mut acc = MetricTriple {
                ssim: 0.0,
                mse: 0.0,
                linf: 0.0,
            };
            for s in searches {
                let m = s.candidate(pair).and_then(|c| c.record.metrics()).expect("pair is in every U");
                acc.ssim += m.ssim / n;
                acc.mse += m.mse / n;
                acc.linf += m.linf / n;
            }
            CandidateRecord {
                pair,
                measurement: Measurement::Measured(acc),
            }
        })
        .collect();
    match select_pair(&shared, &mean_records, cfg.selection) {
        Ok(p) => Ok(Some(p)),
        Err(SearchError::EmptySet) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Samples ready for classification, and ids of images with no admissible pair.
#[derive(Debug, Clone, Default)]
pub struct PreparedSamples {
    pub samples: Vec<AttackSample>,
    pub no_candidate: Vec<String>,
}

pub fn prepare_samples(
    items: &[DatasetItem],
    searches: &[ImageSearch],
    cfg: &PipelineConfig,
) -> Result<PreparedSamples, PipelineError> {
    let global = match cfg.set_mode {
        SetMode::Global => Some(global_selection(searches, cfg)?),
        SetMode::PerImage => None,
    };
    let mut out = PreparedSamples::default();
    for (item, search) in items.iter().zip(searches) {
        let pair = match global {
            Some(g) => g,
            None => match select_pair(&search.sets.intersection, &search.records(), cfg.selection) {
                Ok(p) => Some(p),
                Err(SearchError::EmptySet) => None,
                Err(e) => return Err(e.into()),
            },
        };
        let Some(candidate) = pair.and_then(|p| search.candidate(p)) else {
            out.no_candidate.push(item.id.clone());
            continue;
        };
        out.samples.push(AttackSample {
            id: item.id.clone(),
            label: item.label,
            benign: item.image.clone(),
            adversarial: candidate.image.clone().expect("selected pairs are measured"),
            pair,
            metrics: candidate.record.metrics().copied(),
        });
    }
    Ok(out)
}

/// A classifier plus the number of requests it may have in flight.
pub struct Target {
    pub classifier: Box<dyn Classifier>,
    pub max_in_flight: Option<usize>,
}

/// Builds the configured classifier. Stubs use the dataset's benign images as references.
pub fn build_target(endpoint: &EndpointConfig, items: &[DatasetItem]) -> Result<Target, PipelineError> {
    Ok(match endpoint {
        EndpointConfig::Stub { rule, classes } => Target {
            classifier: Box::new(StubClassifier::new(
                *rule,
                *classes,
                items.iter().map(|i| (i.image.clone(), i.label)).collect(),
            )),
            max_in_flight: None,
        },
        EndpointConfig::Remote {
            url,
            timeout_ms,
            max_in_flight,
        } => {
            let clf = HttpClassifier::new(url, Duration::from_millis(*timeout_ms));
            clf.health()?;
            Target {
                classifier: Box::new(clf),
                max_in_flight: Some(*max_in_flight),
            }
        }
    })
}

/// Classifies every sample, at most `max_in_flight` at a time when set.
pub fn classify_samples(
    target: &Target,
    samples: &[AttackSample],
    cfg: &PipelineConfig,
    defense: Option<&Defense>,
) -> Result<AttackReport, PipelineError> {
    if let Some(d) = defense {
        d.validate()?;
    }
    let run = || {
        samples
            .par_iter()
            .map(|s| evaluate_sample(&*target.classifier, s, cfg.success_mode, defense, cfg.max_retries))
            .collect::<Result<Vec<_>, _>>()
    };
    let entries = match target.max_in_flight {
        Some(n) => worker_pool(Some(n))?.install(run)?,
        None => run()?,
    };
    Ok(AttackReport::from_entries(entries, defense.copied())?)
}

/// Attack outcome as written to `reports/attack.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSummary {
    pub tool_version: String,
    /// Images with an empty admissible set; they are left out of the ASR.
    pub no_candidate: Vec<String>,
    pub report: AttackReport,
}

#[derive(Debug, Clone)]
pub struct AttackRun {
    pub searches: Vec<ImageSearch>,
    pub prepared: PreparedSamples,
    pub report: AttackReport,
}

/// Searches every image, selects adversarial examples and classifies them.
pub fn run_attack(items: &[DatasetItem], cfg: &PipelineConfig, target: &Target) -> Result<AttackRun, PipelineError> {
    let searches = items
        .iter()
        .map(|item| search_image(&item.image, &item.path.display().to_string(), &item.stem(), cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let prepared = prepare_samples(items, &searches, cfg)?;
    if prepared.samples.is_empty() {
        return Err(AttackError::AllUnevaluated(items.len()).into());
    }
    let report = classify_samples(target, &prepared.samples, cfg, None)?;
    Ok(AttackRun {
        searches,
        prepared,
        report,
    })
}
