use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bundle(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/bundles").join(name)
}

fn run(args: &[&str], input: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cvxinv"))
        .args(args)
        .arg("--input")
        .arg(input)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn verdict(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("verdict.json")).unwrap()).unwrap()
}

#[test]
fn diagonal_system_passes_on_the_orthant() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["check-conditions", "--seed", "7"], &bundle("diagonal_orthant.json"), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = verdict(dir.path());
    assert_eq!(v["passed"], true);
    assert_eq!(v["seed"], 7);
    assert!(v["metrics"]["delta_estimate"].as_f64().unwrap() > 0.0);
    let detail: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("conditions.json")).unwrap()).unwrap();
    assert_eq!(detail["seed"], 7);
}

#[test]
fn coupled_system_has_no_factorization() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["detect-factorization"], &bundle("coupled.json"), dir.path());
    assert_eq!(o.status.code(), Some(1));
    let v = verdict(dir.path());
    assert_eq!(v["labels"]["kind"], "none");
    let ratio = v["metrics"]["max_column_ratio"].as_f64().unwrap();
    assert!((ratio - 0.3 / 2f64.sqrt()).abs() < 1e-12, "{ratio}");
}

#[test]
fn laplace_solve_and_audit_stay_in_the_interval() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["solve-box", "--grid", "17"], &bundle("laplace_interval.json"), dir.path());
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("solution.csv")).unwrap();
    assert!(csv.starts_with("# seed: 0\n"));
    assert_eq!(csv.lines().count(), 2 + 17 * 17);

    let o = run(&["audit", "--grid", "17"], &bundle("laplace_interval.json"), dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(verdict(dir.path())["metrics"]["max_margin"].as_f64().unwrap() <= 0.0);
}

#[test]
fn failing_kernel_yields_a_witness() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["check-transform"], &bundle("dense_kernel.json"), dir.path());
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["witness"], &bundle("dense_kernel.json"), dir.path());
    assert_eq!(o.status.code(), Some(1));
    let v = verdict(dir.path());
    assert!(v["metrics"]["image_margin"].as_f64().unwrap() > 0.0);
    let artifacts: Vec<&str> = v["artifacts"].as_array().unwrap().iter().map(|a| a.as_str().unwrap()).collect();
    assert!(artifacts.contains(&"witness.json") && artifacts.contains(&"witness.csv"));
    assert!(dir.path().join("witness.csv").exists());
}

#[test]
fn halfspace_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["normalization-check", "--grid", "32"], &bundle("coupled.json"), dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(verdict(dir.path())["metrics"]["defect"].as_f64().unwrap() <= 1e-10);

    let o = run(&["solve-halfspace", "--heights", "0.1,0.5"], &bundle("coupled.json"), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("halfspace_h1.csv").exists());
    assert!(!dir.path().join("halfspace_h2.csv").exists());
}

#[test]
fn search_finds_a_halfspace_counterexample() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["audit", "--budget", "40", "--seed", "8"], &bundle("coupled.json"), dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    let v = verdict(dir.path());
    assert!(v["metrics"]["search_margin"].as_f64().unwrap() > 1e-3);
    assert!(dir.path().join("counterexample_data.csv").exists());
}

#[test]
fn quasilinear_bundle_checks_and_solves() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["check-conditions"], &bundle("quasilinear.json"), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let o = run(&["audit", "--grid", "17"], &bundle("quasilinear.json"), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(verdict(dir.path())["metrics"]["picard_iterations"].as_f64().is_some());
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let o = run(&["audit", "--budget", "20", "--seed", "3", "--grid", "17"], &bundle("diagonal_orthant.json"), dir.path());
        assert!(o.status.code().unwrap() < 2, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() > 4);
    for name in names.iter().filter(|n| *n != "run.log") {
        let (x, y) = (fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap());
        assert!(x == y, "{name:?} differs");
    }
}

#[test]
fn malformed_json_reports_line_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.json");
    fs::write(&input, "{\n  \"body\": {\"kind\": \"orthant\", \"lower\": [0, true]}\n}\n").unwrap();
    let o = run(&["classify"], &input, dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.json:2:") && err.contains("body"), "{err}");
}

#[test]
fn unknown_identifier_is_an_operational_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("expr.json");
    fs::write(
        &input,
        r#"{"coefficients": {"n": 2, "m": 1, "A2": [[[1]], [[0]], [[1]]]}, "boundary": ["x1 + bogus(x2)"]}"#,
    )
    .unwrap();
    let o = run(&["solve-box"], &input, dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("boundary[0]") && err.contains("column 6") && err.contains("bogus"), "{err}");
}
