//! End-to-end runs of the `taulattice` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_taulattice"))
        .args(args)
        .env("TAULATTICE_OUT", out)
        .output()
        .expect("binary runs")
}

fn summary(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stdout);
    let line = text.lines().last().unwrap_or_else(|| panic!("no summary; stderr: {}", String::from_utf8_lossy(&o.stderr)));
    serde_json::from_str(line).expect("summary is one JSON line")
}

#[test]
fn orthogonal_tau_at_gaussian_point() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["tau", "--ensemble", "orthogonal", "--n", "4"]);
    assert_eq!(o.status.code(), Some(0));
    let s = summary(&o);
    let v = s["value"].as_f64().unwrap();
    assert!((v - std::f64::consts::FRAC_PI_2).abs() < 1e-10, "{v}");
    let art: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("tau.json")).unwrap()).unwrap();
    assert_eq!(art["sizes"], serde_json::json!([0, 2, 4]));
    assert_eq!(art["moment_matrix"].as_array().unwrap().len(), 4);
}

#[test]
fn odd_orthogonal_size_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["tau", "--ensemble", "orthogonal", "--n", "3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_init_goe_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["verify", "init-goe", "--N", "8", "--K", "6"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&o);
    assert_eq!(s["pass"], true);
    assert!(s["reports"][0]["residual_abs"].as_f64().unwrap() <= 1e-9);
    assert!(dir.path().join("verify-init-goe.json").exists());
}

#[test]
fn evolve_volterra_matches_scaling_below_the_front() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["evolve", "volterra", "--t2", "0.2", "--N", "64"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&o);
    let clean = s["clean_sites"].as_u64().unwrap() as usize;
    assert!(clean >= 8);
    let mut rdr = csv::Reader::from_path(dir.path().join("evolution.csv")).unwrap();
    let header = rdr.headers().unwrap().clone();
    assert_eq!(&header[0], "t");
    assert_eq!(&header[1], "B[1]");
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    let last = rows.last().unwrap();
    assert_eq!(last[0].parse::<f64>().unwrap(), 0.2);
    for n in 1..=clean {
        let b: f64 = last[n].parse().unwrap();
        assert!((b - n as f64 / 0.6).abs() < 1e-8, "B[{n}] = {b}");
    }
}

#[test]
fn outputs_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let o = run(dir.path(), &["evolve", "pfaff", "--t2", "0.05", "--N", "12", "--K", "4", "--samples", "2"]);
        assert_eq!(o.status.code(), Some(0));
    }
    let x = fs::read(a.path().join("evolution.csv")).unwrap();
    let y = fs::read(b.path().join("evolution.csv")).unwrap();
    assert_eq!(x, y);
    let text = String::from_utf8(x).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.contains("w[0][1]"));
    let first_value = text.lines().nth(1).unwrap().split(',').nth(1).unwrap();
    assert_eq!(first_value.split('e').next().unwrap().replace(['-', '.'], "").len(), 17);
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"command": "verify", "n": 3, "tolerance": 1e-9}"#).unwrap();
    let o = run(dir.path(), &["--config", cfg.to_str().unwrap(), "verify", "init-gue", "--N", "5"]);
    assert_eq!(o.status.code(), Some(0));
    let art: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("verify-init-gue.json")).unwrap()).unwrap();
    assert_eq!(art[0]["tolerance"].as_f64(), Some(1e-9));
    assert_eq!(art[0]["meta"]["n"].as_u64(), Some(5));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"scaling": {"tolerance": 0}}"#).unwrap();
    let o = run(dir.path(), &["--config", cfg.to_str().unwrap(), "verify", "scaling"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("scaling.tolerance"));

    fs::write(&cfg, r#"{"unknown_field": 1}"#).unwrap();
    let o = run(dir.path(), &["--config", cfg.to_str().unwrap(), "verify", "init-gue"]);
    assert_eq!(o.status.code(), Some(2));

    let o = run(dir.path(), &["evolve", "volterra", "--t1", "0.1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(dir.path(), &["verify", "no-such-suite"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn monte_carlo_requires_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["verify", "observables", "--mc-samples", "1000"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(dir.path(), &["verify", "observables", "--mc-samples", "20000", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&o);
    assert_eq!(s["reports"].as_array().unwrap().len(), 2);
}

#[test]
fn failing_check_exits_one_and_names_the_identity() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["verify", "init-gue", "--tol", "1e-16"]);
    assert_eq!(o.status.code(), Some(1));
    let s = summary(&o);
    assert_eq!(s["failures"], serde_json::json!(["init-gue"]));
    assert!(String::from_utf8_lossy(&o.stderr).contains("init-gue"));
}

#[test]
fn continuum_and_scan_commands() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["continuum", "hopf", "--profile", "0,1", "--time", "0.1", "--nx", "5", "--x-lo", "0", "--x-hi", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let mut rdr = csv::Reader::from_path(dir.path().join("hopf.csv")).unwrap();
    for r in rdr.records() {
        let r = r.unwrap();
        let (x, u): (f64, f64) = (r[0].parse().unwrap(), r[1].parse().unwrap());
        assert!((u - x / 0.8).abs() < 1e-12);
    }
    let o = run(dir.path(), &["continuum", "chain", "--time", "0.05", "--nx", "31"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(dir.path().join("field.csv")).unwrap();
    let header = rdr.headers().unwrap().clone();
    assert_eq!((&header[0], &header[1], &header[2]), ("x", "v", "u[-6]"));
    let o = run(dir.path(), &["scan-haantjes", "--points", "3"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(summary(&o)["reports"].as_array().unwrap().len(), 2);
}
