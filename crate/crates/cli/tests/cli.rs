use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn segnn(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_segnn"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = segnn(args, cwd);
    assert!(
        out.status.success(),
        "segnn {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const SMALL: &[&str] = &["--train", "12", "--val", "4", "--test", "4", "--seed", "5"];

fn generate(dir: &Path, name: &str) {
    let mut args = vec!["generate", "charged", "--out", name];
    args.extend_from_slice(SMALL);
    ok(&args, dir);
}

fn train(dir: &Path, out: &str, extra: &[&str]) -> Value {
    let mut args = vec![
        "train", "--dataset", "d", "--out", out, "--epochs", "2", "--hidden-dim", "8", "--num-layers", "2",
        "--batch-size", "6", "--micro-batch", "2",
    ];
    args.extend_from_slice(extra);
    serde_json::from_str(&ok(&args, dir)).unwrap()
}

#[test]
fn generate_and_train_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    generate(dir, "d");
    generate(dir, "d2");
    assert_eq!(fs::read(dir.join("d/manifest.json")).unwrap(), fs::read(dir.join("d2/manifest.json")).unwrap());
    let a = train(dir, "r1", &[]);
    let b = train(dir, "r2", &[]);
    assert_eq!(a, b);
    assert_eq!(fs::read(dir.join("r1/metrics.jsonl")).unwrap(), fs::read(dir.join("r2/metrics.jsonl")).unwrap());
    assert_eq!(fs::read_to_string(dir.join("r1/metrics.jsonl")).unwrap().lines().count(), 3);
    assert_eq!(fs::read_to_string(dir.join("r1/timing.jsonl")).unwrap().lines().count(), 3);
}

#[test]
fn flags_and_config_file_override_the_preset() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    generate(dir, "d");
    fs::write(dir.join("c.json"), r#"{"epochs": 7, "loss": "mae", "model": {"l_f": 0, "l_a": 0}}"#).unwrap();
    let args = [
        "train", "--dataset", "d", "--out", "r", "--config", "c.json", "--epochs", "1", "--lr", "0.001",
        "--hidden-dim", "8", "--num-layers", "2",
    ];
    ok(&args, dir);
    let cfg: Value = serde_json::from_str(&fs::read_to_string(dir.join("r/config.json")).unwrap()).unwrap();
    // flag beats file, file beats preset, preset fills the rest
    assert_eq!(cfg["epochs"], 1);
    assert_eq!(cfg["loss"], "mae");
    assert_eq!(cfg["model"]["l_f"], 0);
    assert_eq!(cfg["model"]["hidden_dim"], 8);
    assert_eq!(cfg["model"]["optimizer"]["lr"], 0.001);
    assert_eq!(cfg["model"]["extra_edge_scalars"], 2);
    assert_eq!(cfg["model"]["node_vectors"], serde_json::json!(["velocity"]));

    fs::write(dir.join("bad.json"), r#"{"epoch": 3}"#).unwrap();
    let out = segnn(&["train", "--dataset", "d", "--config", "bad.json"], dir);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evaluate_reports_value_timing_and_baseline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    generate(dir, "d");
    let summary = train(dir, "r", &[]);
    let report: Value =
        serde_json::from_str(&ok(&["evaluate", "--checkpoint", "r/best.json", "--dataset", "d"], dir)).unwrap();
    assert_eq!(report["value"], summary["test_mse"]);
    assert_eq!(report["num_samples"], 4);
    assert!(report["mean_forward_seconds"].as_f64().unwrap() > 0.0);
    assert!(report["zero_baseline"].as_f64().unwrap() > 0.0);
}

#[test]
fn verify_exit_status_follows_the_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    let pass = segnn(&["verify", "equivariance", "--samples", "5"], dir);
    assert_eq!(pass.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&pass.stdout).unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["checks"].as_array().unwrap().len(), 5);

    for fault in ["ignore-parity", "flip-cg-sign"] {
        let out = segnn(&["verify", "equivariance", "--samples", "5", "--fault", fault], dir);
        assert_eq!(out.status.code(), Some(1), "{fault} mutant must fail");
    }
    assert_eq!(segnn(&["verify", "invariance", "--samples", "5"], dir).status.code(), Some(0));
    let covariant = segnn(&["verify", "invariance", "--samples", "5", "--l-f", "1", "--l-a", "1"], dir);
    assert_eq!(covariant.status.code(), Some(1));
    let corrupt = segnn(&["verify", "gradients", "--fault", "corrupt-adjoint", "--out", "g.json"], dir);
    assert_eq!(corrupt.status.code(), Some(1));
    let saved: Value = serde_json::from_str(&fs::read_to_string(dir.join("g.json")).unwrap()).unwrap();
    assert_eq!(saved["passed"], false);
}

#[test]
fn glyph_writes_the_requested_grid() {
    let dir = tempfile::tempdir().unwrap();
    let csv = ok(&["glyph", "--layout", "1x0e+1x1o", "--coeffs", "1,0,-0.5,0"], dir.path());
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("nx,ny,nz,f"));
    assert_eq!(lines.count(), 512);
    ok(&["glyph", "--layout", "1x0e", "--coeffs", "2", "--count", "10", "--out", "g.csv"], dir.path());
    assert_eq!(fs::read_to_string(dir.path().join("g.csv")).unwrap().lines().count(), 11);
    let wrong = segnn(&["glyph", "--layout", "1x0e+1x1o", "--coeffs", "1,2"], dir.path());
    assert_eq!(wrong.status.code(), Some(2));
}
