mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use advsmo::config::PipelineConfig;
use advsmo::io::{load_image, save_image};
use advsmo::manifest::{CandidateManifest, RunManifest};
use advsmo::pipeline::AttackSummary;
use advsmo_core::synthetic::{stripes, StripeSpec};
use common::{stripe_config, write_config, write_stripe_dataset};

fn advsmo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_advsmo"))
        .args(args)
        .env_remove("ADVSMO_ENDPOINT")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn grating(dir: &Path, name: &str) -> String {
    let spec = StripeSpec {
        size: 24,
        period: 6.0,
        angle: 30.0,
        phase: 0.3,
        low: 0.2,
        high: 0.8,
    };
    let path = dir.join(name);
    save_image(&stripes(&spec), &path).unwrap();
    path.display().to_string()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(advsmo(&["--help"]).status.code(), Some(0));
    let o = advsmo(&["smooth", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
    assert_eq!(advsmo(&[]).status.code(), Some(1));
    assert_eq!(advsmo(&["search"]).status.code(), Some(1));
}

#[test]
fn smooth_writes_png_and_kernel() {
    let dir = tempfile::tempdir().unwrap();
    let x = grating(dir.path(), "x.png");
    let y = dir.path().join("y.png");
    let k = dir.path().join("k.csv");
    let o = advsmo(&["smooth", "--in", &x, "--k1", "9", "--theta", "45", "--out", p(&y), "--kernel-csv", p(&k)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(load_image(&y).unwrap().shape(), (24, 24, 1));
    let csv = fs::read_to_string(&k).unwrap();
    assert_eq!(csv.lines().count(), 9);
    assert!(csv.lines().all(|l| l.split(',').count() == 9));
    let sum: f64 = csv.lines().flat_map(|l| l.split(',')).map(|v| v.parse::<f64>().unwrap()).sum();
    assert!((sum - 1.0).abs() < 1e-9);
}

#[test]
fn runtime_failures_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let y = dir.path().join("y.png");
    let missing = dir.path().join("missing.png");
    let o = advsmo(&["smooth", "--in", p(&missing), "--k1", "9", "--theta", "0", "--out", p(&y)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not found"), "{}", stderr(&o));
}

#[test]
fn invalid_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let x = grating(dir.path(), "x.png");
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"grid": {"theta_step": 7}}"#).unwrap();
    let o = advsmo(&["search", "--in", &x, "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("grid.theta_step"), "{}", stderr(&o));
    fs::write(&cfg, r#"{"thresholds": {"ssim_low": 0.1}}"#).unwrap();
    let o = advsmo(&["search", "--in", &x, "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("ssim_low"), "{}", stderr(&o));
}

#[test]
fn search_writes_manifest_images_and_run_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let x = grating(dir.path(), "x.png");
    let out = dir.path().join("out");
    let cfg_path = dir.path().join("cfg.json");
    write_config(&cfg_path, &PipelineConfig {
        output_root: out.clone(),
        ..PipelineConfig::default()
    });
    let o = advsmo(&["search", "--in", &x, "--config", p(&cfg_path)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    // the shipped thresholds cannot be met together
    assert!(stderr(&o).contains("warning"), "{}", stderr(&o));
    let m: CandidateManifest = serde_json::from_slice(&fs::read(out.join("manifests/x.candidates.json")).unwrap()).unwrap();
    assert_eq!(m.records.len(), 133);
    assert!(m.sets.intersection.is_empty());
    for r in &m.records {
        match &r.image_ref {
            Some(rel) => assert_eq!(load_image(&out.join(rel)).unwrap().shape(), (24, 24, 1)),
            None => assert!(r.skipped.is_some()),
        }
    }
    let run: RunManifest = serde_json::from_slice(&fs::read(out.join("manifests/run-search.json")).unwrap()).unwrap();
    assert_eq!(run.config_hash.len(), 64);
    assert!(run.tool_version.starts_with("advsmo "));
    let replay: PipelineConfig = serde_json::from_value(run.config).unwrap();
    assert_eq!(replay.hash(), run.config_hash);
    assert!(run.outputs.contains(&"manifests/x.candidates.json".to_string()));
}

fn tree_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if !path.ends_with("run-search.json") && !path.ends_with("run-attack.json") {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let x = grating(dir.path(), "x.png");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(advsmo(&["--workers", "1", "search", "--in", &x, "--out", p(&a)]).status.code(), Some(0));
    assert_eq!(advsmo(&["--workers", "4", "search", "--in", &x, "--out", p(&b)]).status.code(), Some(0));
    let (ta, tb) = (tree_bytes(&a), tree_bytes(&b));
    assert_eq!(ta.len(), 134);
    assert!(ta == tb);
}

#[test]
fn attack_defend_and_endpoint_override() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    write_stripe_dataset(&data, 6);
    let out = dir.path().join("out");
    let cfg = dir.path().join("cfg.json");
    write_config(&cfg, &stripe_config(&data, &out));

    let o = advsmo(&["attack", "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary: AttackSummary = serde_json::from_slice(&fs::read(out.join("reports/attack.json")).unwrap()).unwrap();
    assert_eq!(summary.report.evaluated + summary.no_candidate.len(), 6);
    let csv = fs::read_to_string(out.join("reports/attack.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "sample_id,y,y_hat,success,k1,theta,ssim,mse,linf");
    assert!(out.join("manifests/run-attack.json").exists());

    let o = advsmo(&["defend", "--config", p(&cfg), "--defense", "median"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let evasion = fs::read_to_string(out.join("reports/evasion.csv")).unwrap();
    assert_eq!(evasion.lines().count(), 3);
    assert!(out.join("reports/evasion-median3.json").exists());

    // nothing listens on the overriding URL, so the run fails before writing reports
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let out2 = dir.path().join("out2");
    let o = Command::new(env!("CARGO_BIN_EXE_advsmo"))
        .args(["attack", "--config", p(&cfg), "--out", p(&out2)])
        .env("ADVSMO_ENDPOINT", format!("http://127.0.0.1:{port}"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("classifier unavailable"), "{}", stderr(&o));
    assert!(!out2.join("reports/attack.json").exists());
}

#[test]
fn single_image_defense() {
    let dir = tempfile::tempdir().unwrap();
    let x = grating(dir.path(), "x.png");
    let y = dir.path().join("y.png");
    let o = advsmo(&["defend", "--in", &x, "--defense", "min", "--window", "3", "--out", p(&y)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (a, b) = (load_image(Path::new(&x)).unwrap(), load_image(&y).unwrap());
    assert!(a.pixels().iter().zip(b.pixels()).all(|(a, b)| b <= a));
    let o = advsmo(&["defend", "--in", &x, "--defense", "min", "--window", "4", "--out", p(&y)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn glcm_train_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let x = grating(dir.path(), "x.png");
    let out = dir.path().join("out");
    assert_eq!(advsmo(&["search", "--in", &x, "--out", p(&out)]).status.code(), Some(0));
    let adv = out.join("images/x/k9_t45.png");

    let o = advsmo(&["glcm", "--in", &x, "--against", p(&adv), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("texture_diff "));
    assert_eq!(fs::read_to_string(out.join("reports/x.glcm.csv")).unwrap().lines().count(), 8);
    assert_eq!(load_image(&out.join("images/x.vs.k9_t45.heatmap.png")).unwrap().shape(), (5, 5, 1));

    let manifest = out.join("manifests/x.candidates.json");
    let o = advsmo(&["train-surrogate", "--manifest", p(&manifest), "--epochs", "50", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let model: serde_json::Value = serde_json::from_slice(&fs::read(out.join("reports/surrogate.json")).unwrap()).unwrap();
    let keys: Vec<&str> = model.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, ["b1", "b2", "epochs_trained", "input_norm", "seed", "w1", "w2"]);
    assert_eq!(fs::read_to_string(out.join("reports/surrogate-loss.csv")).unwrap().lines().count(), 51);

    let o = advsmo(&["report", "--manifest", p(&manifest), "--out", p(&out), "--cell", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(load_image(&out.join("images/x.ssim-surface.png")).unwrap().shape(), (19 * 4, 7 * 4, 1));
    assert_eq!(fs::read_to_string(out.join("reports/x.surface.csv")).unwrap().lines().count(), 134);
}
