use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ws_scatter(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ws-scatter"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

#[test]
fn validate_accepts_bundled_scenario() {
    let out = ws_scatter(&["validate", scenario("reference.toml").to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains("\"reference\" is valid"));
}

#[test]
fn validate_resolved_prints_every_section() {
    let out = ws_scatter(&["validate", "--resolved", scenario("long_range.toml").to_str().unwrap()]);
    assert!(out.status.success());
    let toml = text(&out.stdout);
    for section in ["[grid.profile]", "[times]", "[remainders]", "[checks]", "[tolerances]"] {
        assert!(toml.contains(section), "missing {section} in\n{toml}");
    }
}

#[test]
fn validate_lists_violations() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "[grid.physical]\nn = 64\nbox_length = 32.0\n\n[times]\nT = 0.5\n").unwrap();
    let out = ws_scatter(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = text(&out.stderr);
    assert!(err.contains("box_length >= 2 * t_max * support_radius"), "{err}");
    assert!(err.contains("times.T"), "{err}");
}

#[test]
fn validate_reports_missing_file() {
    let out = ws_scatter(&["validate", "/nonexistent/x.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("x.toml"));
}

#[test]
fn fit_recovers_power_law() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("series.csv");
    let mut csv = String::from("t,v\n");
    // Out of order, as in a backward trajectory.
    for t in [32.0f64, 16.0, 8.0, 4.0, 2.0] {
        csv.push_str(&format!("{t},{}\n", 3.0 * t.powf(-1.5)));
    }
    fs::write(&path, csv).unwrap();
    let out = ws_scatter(&["fit", path.to_str().unwrap(), "--column", "v", "--from", "4"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let fit: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((fit["exponent"].as_f64().unwrap() + 1.5).abs() < 1e-10);
    assert!((fit["prefactor"].as_f64().unwrap() - 3.0).abs() < 1e-9);
    assert_eq!(fit["window"][0].as_f64().unwrap(), 4.0);
}

#[test]
fn fit_names_available_columns() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("series.csv");
    fs::write(&path, "t,v\n1,1\n2,0.5\n").unwrap();
    let out = ws_scatter(&["fit", path.to_str().unwrap(), "--column", "w"]);
    assert_eq!(out.status.code(), Some(2));
    let err = text(&out.stderr);
    assert!(err.contains("no column \"w\"") && err.contains("\"v\""), "{err}");
}

#[test]
fn run_without_prerequisite_fails_with_reason() {
    let dir = tempfile::tempdir().unwrap();
    let out = ws_scatter(&[
        "run",
        scenario("reference.toml").to_str().unwrap(),
        "--stages",
        "checks",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = text(&out.stdout);
    assert!(stdout.contains("missing prerequisite: stage profiles was not requested"), "{stdout}");
    assert!(dir.path().join("verdicts.csv").exists());
    assert!(dir.path().join("summary.json").exists());
}

#[test]
fn run_rejects_unknown_stage() {
    let out = ws_scatter(&["run", scenario("reference.toml").to_str().unwrap(), "--stages", "profiles,nope"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("nope"));
}
