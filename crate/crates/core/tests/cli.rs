use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn coni(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coni"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("run coni")
}

fn write_config(dir: &TempDir, text: &str) -> PathBuf {
    let path = dir.path().join("exp.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn missing_scheme_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "r = 1.0\n");
    let out = coni(&["run"], &cfg, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("scheme"));
}

#[test]
fn unknown_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "scheme = \"fixed_point\"\n[mpc]\nhorizn = 1.0\n");
    let out = coni(&["run"], &cfg, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("horizn"));
}

#[test]
fn zero_jobs_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "scheme = \"fixed_point\"\n");
    let out = coni(&["sweep", "--jobs", "0"], &cfg, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("jobs"));
}

#[test]
fn run_outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "scheme = \"fixed_point\"\nduration = 2.0\nsettle = 1.0\nseed = 3\n");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert!(coni(&["run"], &cfg, out).status.success());
    }
    for file in ["summary.json", "timeseries.csv"] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap(), "{file}");
    }
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["scheme"], "fixed_point");
    assert_eq!(summary["seed"], 3);
    assert!(summary["solver_mean_ms"].is_null());
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "run");
    assert_eq!(manifest["config"]["seed"], 3);
}

#[test]
fn seed_flag_changes_noise() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "scheme = \"fixed_point\"\nduration = 1.0\nsettle = 0.0\n");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(coni(&["run", "--seed", "1"], &cfg, &a).status.success());
    assert!(coni(&["run", "--seed", "2"], &cfg, &b).status.success());
    assert_ne!(std::fs::read(a.join("timeseries.csv")).unwrap(), std::fs::read(b.join("timeseries.csv")).unwrap());
}

#[test]
fn sweep_csv_independent_of_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        &dir,
        "scheme = \"fixed_point\"\nduration = 0.5\nsettle = 0.0\n[sweep]\n\
         r = { start = 0.0, stop = 2.0, step = 1.0 }\nv = { start = 0.0, stop = 1.0, step = 1.0 }\n\
         omega = { start = 0.01, stop = 2.01, step = 1.0 }\n",
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(coni(&["sweep", "--jobs", "1"], &cfg, &a).status.success());
    assert!(coni(&["sweep", "--jobs", "16"], &cfg, &b).status.success());
    let csv = std::fs::read(a.join("sweep.csv")).unwrap();
    assert_eq!(csv, std::fs::read(b.join("sweep.csv")).unwrap());
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1 + 18);
}

#[test]
fn full_grid_and_slice_map() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "scheme = \"fixed_point\"\nduration = 0.02\nsettle = 0.0\n");
    let out = dir.path().join("out");
    let res = coni(&["sweep", "--slice", "omega=0.31"], &cfg, &out);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 9261);

    let map = std::fs::read_to_string(out.join("error_map_omega_0.31.csv")).unwrap();
    let rows: Vec<&str> = map.lines().collect();
    assert_eq!(rows.len(), 1 + 21);
    assert!(rows[0].starts_with("r\\v,0,0.1,"));
    assert!(rows.iter().all(|r| r.split(',').count() == 22));
    let mask = std::fs::read_to_string(out.join("error_map_omega_0.31_failed.csv")).unwrap();
    assert_eq!(mask.lines().count(), 22);
}

#[test]
fn verify_passes() {
    let out = Command::new(env!("CARGO_BIN_EXE_coni")).arg("verify").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 5);
    assert!(!text.contains("FAIL "));
}
