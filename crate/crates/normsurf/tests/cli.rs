use std::path::{Path, PathBuf};
use std::process::Command;

use normsurf::cli::{main_with_args, EXIT_CONTRADICTION, EXIT_ERROR, EXIT_OK};
use serde_json::Value;

fn scene(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenes").join(name)
}

fn run(args: &[&str]) -> i32 {
    let mut full = vec!["normsurf"];
    full.extend_from_slice(args);
    main_with_args(full)
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn calibrate_bundled_scene_certifies() {
    let dir = tempfile::tempdir().unwrap();
    let s = scene("fsigma_calibrate.json");
    let code = run(&["calibrate", "--scene", s.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    let r = report(dir.path());
    assert!(r["result"]["summary"]["sigma_witness"].as_f64().is_some());
    assert_eq!(r["command"], "calibrate");
    assert!(r["version"].as_str().unwrap().starts_with(env!("CARGO_PKG_VERSION")));
    assert!(dir.path().join("rho.csv").exists());
    assert!(dir.path().join("special_coordinates.csv").exists());
}

#[test]
fn oversized_quartic_weight_is_an_error_with_eigenvalues() {
    let dir = tempfile::tempdir().unwrap();
    let s = scene("quartic_lambda_too_large.json");
    let code = run(&["norm-check", "--scene", s.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, EXIT_ERROR);
    let r = report(dir.path());
    assert_eq!(r["result"]["strictly_convex"], false);
    assert!(r["result"]["min_eigenvalue"].as_f64().unwrap() < 0.0);
    assert_eq!(r["result"]["eigenvalues"].as_array().unwrap().len(), 2);
}

#[test]
fn refute_line_bundled_scene() {
    let dir = tempfile::tempdir().unwrap();
    let s = scene("hyperboloid_refute.json");
    let code = run(&["refute-line", "--scene", s.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    let r = report(dir.path());
    assert_eq!(r["result"]["status"], "refuted");
    assert!(r["result"]["refuted_at"].as_f64().unwrap() <= 256.0);
    let csv = std::fs::read_to_string(dir.path().join("competitor.csv")).unwrap();
    assert!(csv.starts_with("x,y,z\n"));
}

#[test]
fn reports_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let s = scene("paraboloid_connect.json");
    assert_eq!(run(&["connect", "--scene", s.to_str().unwrap(), "--out", out, "--seed", "3"]), EXIT_OK);
    let first = std::fs::read(dir.path().join("report.json")).unwrap();
    let first_csv = std::fs::read(dir.path().join("path.csv")).unwrap();
    assert_eq!(
        run(&["connect", "--scene", s.to_str().unwrap(), "--out", out, "--seed", "3", "--jobs", "2"]),
        EXIT_OK
    );
    assert_eq!(first, std::fs::read(dir.path().join("report.json")).unwrap());
    assert_eq!(first_csv, std::fs::read(dir.path().join("path.csv")).unwrap());
}

#[test]
fn config_file_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let body = serde_json::json!({
        "command": "cone-shortcut",
        "input": scene("cone_shortcut.json"),
        "out": "result",
        "seed": 1,
        "tolerances": { "scale": 2.0 }
    });
    std::fs::write(&cfg, body.to_string()).unwrap();
    let code = run(&["--config", cfg.to_str().unwrap(), "--seed", "9"]);
    assert_eq!(code, EXIT_OK);
    let r = report(&dir.path().join("result"));
    assert_eq!(r["config"]["seed"], 9);
    assert_eq!(r["config"]["tolerances"]["scale"], 2.0);
    assert!(r["result"]["margin"].as_f64().unwrap() > 0.0);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"command": "shoot", "input": "x.json", "speed": 2}"#).unwrap();
    assert_eq!(run(&["--config", cfg.to_str().unwrap()]), EXIT_ERROR);
}

#[test]
fn mismatched_command_and_missing_input_fail() {
    assert_eq!(run(&["shoot"]), EXIT_ERROR);
    assert_eq!(run(&[]), EXIT_ERROR);
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    assert_eq!(run(&["shoot", "--scene", missing.to_str().unwrap()]), EXIT_ERROR);
}

#[test]
fn tight_tolerance_turns_calibration_into_a_finding() {
    // With every tolerance scaled to zero nothing can certify.
    let dir = tempfile::tempdir().unwrap();
    let s = scene("fsigma_calibrate.json");
    let code = run(&[
        "calibrate",
        "--scene",
        s.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--tol-scale",
        "1e-300",
    ]);
    assert_eq!(code, EXIT_CONTRADICTION);
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_normsurf");
    let ok = Command::new(bin)
        .args(["classify", "--scene"])
        .arg(scene("saddle_classify.json"))
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(ok.code(), Some(EXIT_OK));
    let bad = Command::new(bin)
        .args(["norm-check", "--scene"])
        .arg(scene("quartic_lambda_too_large.json"))
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(bad.code(), Some(EXIT_ERROR));
}
