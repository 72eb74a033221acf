use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vaisman-cy"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn verify_passes_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["verify", "--model", "nil3", "--samples", "20"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let report = json(&dir.path().join("verify_report.json"));
    assert_eq!(report["schema"], "vaisman-cy/1");
    assert_eq!(report["pass"], true);
    assert_eq!(report["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn flipped_convention_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["verify", "--model", "nil3", "--samples", "10", "--convention", "flipped"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&dir.path().join("verify_report.json"))["pass"], false);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["uniqueness", "--model", "nil3", "--inits", "1"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = json(&dir.path().join("uniqueness_error.json"));
    assert_eq!(err["error"]["exit_code"], 2);
    let out = run(&["solve", "--model", "hopf3"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn non_convergence_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["solve", "--model", "nil3", "--grid", "8", "--max-iters", "1"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    let err = json(&dir.path().join("solve_error.json"));
    assert_eq!(err["error"]["stage"], "solve");
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "model = nil3\nseed = 3 # file value\nsamples = 5\n").unwrap();
    let out = run(
        &["verify", "--config", cfg.to_str().unwrap(), "--seed", "7"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let config = &json(&dir.path().join("verify_report.json"))["config"];
    assert_eq!(config["model"], "nil3");
    assert_eq!(config["seed"], 7);
    assert_eq!(config["samples"], 5);
}
