use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ksmpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ksmpc"))
        .args(args)
        .env_remove("KSMPC_OUT")
        .output()
        .expect("binary runs")
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

#[test]
fn prediction_only_run_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = ksmpc(&["--preset", "prediction-circular", "--set", "sim.duration=1", "--out", &out_arg(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["trace.csv", "predictions.csv", "metrics.json", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let preds = fs::read_to_string(dir.path().join("predictions.csv")).unwrap();
    assert!(preds.lines().count() > 1);

    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let header: Vec<&str> = trace.lines().next().unwrap().split(',').collect();
    let mode_cols: Vec<usize> =
        header.iter().enumerate().filter(|(_, c)| c.ends_with("_mode")).map(|(i, _)| i).collect();
    assert_eq!(mode_cols.len(), 3);
    for line in trace.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert!(mode_cols.iter().all(|&i| f[i] == "1"), "{line}");
    }
    assert_eq!(trace.lines().count(), 1 + 101);
}

#[test]
fn rerun_from_manifest_reproduces_trace_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = ksmpc(&["--set", "sim.duration=0.5", "--seed", "7", "--out", &out_arg(a.path())]);
    assert!(first.status.success());
    let manifest = a.path().join("manifest.json");
    let second = ksmpc(&["--config", manifest.to_str().unwrap(), "--out", &out_arg(b.path())]);
    assert!(second.status.success(), "{}", String::from_utf8_lossy(&second.stderr));
    assert_eq!(fs::read(a.path().join("trace.csv")).unwrap(), fs::read(b.path().join("trace.csv")).unwrap());

    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(manifest).unwrap()).unwrap();
    assert_eq!(m["seed"], 7);
    assert_eq!(m["config"]["koopman"]["min_samples"], 13);
}

#[test]
fn safety_violation_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    // A stationary UAV at (3.5, 0, 0) with an obstacle circling 5 cm around it.
    let out = ksmpc(&[
        "--preset",
        "prediction-circular",
        "--set",
        "obstacles.center=[3.5, 0, 0]",
        "--set",
        "obstacles.scale=0.05",
        "--set",
        "sim.duration=0.2",
        "--out",
        &out_arg(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["safety_violated"], true);
}

#[test]
fn bad_configuration_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "seed = 3\n[sim]\nsample_tme = 0.01\n").unwrap();
    let out = ksmpc(&["--config", cfg.to_str().unwrap(), "--out", &out_arg(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("sim.sample_tme"), "{err}");

    let out = ksmpc(&["--set", "T=-1", "--out", &out_arg(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sim.sample_time"));

    let out = ksmpc(&["--preset", "nope"]);
    assert!(!out.status.success());
}

#[test]
fn output_dir_falls_back_to_env() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let out = Command::new(env!("CARGO_BIN_EXE_ksmpc"))
        .args(["--set", "sim.duration=0", "--prediction-only"])
        .env("KSMPC_OUT", &target)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = fs::read_to_string(target.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 2);
}

#[test]
fn unwritable_output_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("not-a-dir");
    fs::write(&file, "x").unwrap();
    let out = ksmpc(&["--set", "sim.duration=0", "--out", file.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}
