use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SPDE: &str = r#"{"family": "spde", "alpha": 2.0, "beta": 0.5, "hurst": 0.5, "dim": 1}"#;

fn config(dir: &Path, model: &str, grid: &str, extra: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    let text = format!(
        r#"{{
  "schema_version": 1,
  "model": {model},
  "grid": {grid},
  "sampler": {{"n_paths": 1000, "master_seed": 11}}{extra}
}}"#
    );
    fs::write(&path, text).unwrap();
    path
}

fn run(stage: &str, cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anifield"))
        .arg(stage)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

fn ball(steps: usize) -> String {
    format!(r#"{{"kind": "delta_ball", "center": [1.0, 0.0], "radius": 0.1, "steps": {steps}}}"#)
}

#[test]
fn validate_echoes_exponents() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SPDE, &ball(2), "");
    let out = dir.path().join("out");
    let o = run("validate", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    let e = &r["stages"]["validate"]["data"]["exponents"];
    assert_eq!(e["theta1"].as_f64(), Some(0.375));
    assert_eq!(e["theta2"].as_f64(), Some(0.75));
    assert_eq!(e["big_q"].as_f64(), Some(4.0));
    assert_eq!(r["passed"], Value::Bool(true));
}

#[test]
fn malformed_config_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, "{\n  \"schema_version\": 1,\n  \"model\": {\"family\": \"spde\" \"alpha\": 2}\n}").unwrap();
    let o = run("validate", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.json:3:"), "{err}");
}

#[test]
fn unknown_field_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SPDE, &ball(2), ",\n  \"smaple\": {}");
    let o = run("validate", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("smaple"));
}

#[test]
fn unsupported_model_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let model = r#"{"family": "spde", "alpha": 2.0, "beta": 0.5, "hurst": 0.1, "dim": 1}"#;
    let cfg = config(dir.path(), model, &ball(2), "");
    let o = run("validate", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn grid_outside_domain_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let domain = r#",
  "domain": {"lower": [1.0, -1.0], "upper": [2.0, 1.0]}"#;
    let cfg = config(dir.path(), SPDE, &ball(2), domain);
    let o = run("validate", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn outputs_are_deterministic_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SPDE, &ball(2), "");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for stage in ["cov", "sample"] {
        assert_eq!(run(stage, &cfg, &a, &[]).status.code(), Some(0));
        assert_eq!(run(stage, &cfg, &b, &["--threads", "1"]).status.code(), Some(0));
    }
    for f in ["gram.csv", "ensemble.csv", "ensemble.bin"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = dir.path().join("c");
    run("sample", &cfg, &c, &["--seed", "12"]);
    assert_ne!(fs::read(a.join("ensemble.bin")).unwrap(), fs::read(c.join("ensemble.bin")).unwrap());
    assert_eq!(report(&c)["config"]["sampler"]["master_seed"].as_u64(), Some(12));
}

#[test]
fn all_matches_individual_stages() {
    let dir = tempfile::tempdir().unwrap();
    let model = r#"{"family": "product", "alphas": [0.6, 0.8]}"#;
    let grid = r#"{"kind": "delta_ball", "center": [1.0, 1.0], "radius": 0.03, "steps": 4}"#;
    let cfg = config(dir.path(), model, grid, "");
    let all = dir.path().join("all");
    let code = run("all", &cfg, &all, &[]).status.code();
    assert!(matches!(code, Some(0) | Some(1)), "{code:?}");
    let combined = report(&all);
    let stages = combined["stages"].as_object().unwrap();
    assert_eq!(stages.len(), 7);
    for (name, stage) in stages {
        let out = dir.path().join(name);
        run(name, &cfg, &out, &[]);
        let single = report(&out);
        assert_eq!(&single["stages"][name], stage, "{name}");
        for f in stage["outputs"].as_array().unwrap() {
            let f = f.as_str().unwrap();
            assert_eq!(fs::read(all.join(f)).unwrap(), fs::read(out.join(f)).unwrap(), "{f}");
        }
    }
    assert!(combined["metadata"]["cache_hits"].as_u64().unwrap() > 0);
    assert!(combined["constants"]["c2"].as_f64().unwrap() > 0.0);
}

#[test]
fn lilconst_matches_baselines() {
    let dir = tempfile::tempdir().unwrap();
    let extra = r#",
  "estimators": {"lilconst": {"base": [1.0, 0.0], "s_values": [1e-2, 1e-3]}}"#;
    let cfg = config(dir.path(), SPDE, &ball(2), extra);
    let out = dir.path().join("out");
    let o = run("lilconst", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let body: Value = serde_json::from_str(&fs::read_to_string(out.join("lilconst.json")).unwrap()).unwrap();
    let k = &body["constants"];
    let k5 = k["kappa5"].as_f64().unwrap();
    let k6 = k["kappa6"].as_f64().unwrap();
    assert!((k5 / 1.240_466_297_934_20 - 1.0).abs() < 1e-6, "{k5}");
    assert!((k6 / 1.031_429_144_958_82 - 1.0).abs() < 1e-6, "{k6}");
    assert!(k["kappa5_error"].as_f64().unwrap() < 1e-5);
    assert_eq!(body["time_ratios"].as_array().unwrap().len(), 2);
}

#[test]
fn missing_config_flag_exits_with_parse_code() {
    let o = Command::new(env!("CARGO_BIN_EXE_anifield")).arg("validate").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}
