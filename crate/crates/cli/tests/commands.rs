use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("run.toml");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_spherefield"))
        .args(args)
        .args(["--config", "run.toml", "--out", "out"])
        .current_dir(dir)
        .output()
        .unwrap()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out/report.json")).unwrap()).unwrap()
}

#[test]
fn free_field_constant_functional_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "dim = 1\nl_max = 16\nsamples = 200\n[lagrangian]\nfamily = \"zero\"\n[[functional]]\nkind = \"constant\"\nvalue = 1.0\n";
    let out = run(dir.path(), cfg, &["estimate"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path());
    assert_eq!(r["results"]["estimates"][0]["value"], 1.0);
    assert!(dir.path().join("out/estimates.csv").exists());
    assert!(dir.path().join("out/timing.json").exists());
}

#[test]
fn invalid_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "dim = 3\nsamples = 1\nschedul = 4\n", &["estimate"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("dim"), "{err}");
    assert!(err.contains("samples"), "{err}");
    assert!(err.contains("schedule"), "{err}");
}

#[test]
fn missing_config_file_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_spherefield"))
        .args(["estimate", "--config"])
        .arg(dir.path().join("absent.toml"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn rp_test_warns_on_invalid_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "dim = 1\nn = 4\nsamples = 500\n[schedule]\nlambda = { coeff = 1.0, power = 2.0 }\n";
    let out = run(dir.path(), cfg, &["rp-test"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("not RP-valid"));
    let r = report(dir.path());
    assert_eq!(r["results"]["schedule_rp_valid"], false);
    assert_eq!(r["config"]["schedule_rp_valid"], false);
}

#[test]
fn schedule_sweep_passes_and_flags_small_spheres() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "dim = 1\nsamples = 500\n[sweep]\nn_values = [1, 2, 4]\n";
    let out = run(dir.path(), cfg, &["schedule-sweep"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path());
    let rows = r["results"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0]["in_plus"], false);
    assert_eq!(rows[2]["in_plus"], true);
}

#[test]
fn translation_residuals_decrease() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "dim = 1\n[translation]\nradii = [5.0, 10.0, 20.0]\n";
    let out = run(dir.path(), cfg, &["translation-test"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(report(dir.path())["results"]["strictly_decreasing"], true);
}

#[test]
fn reports_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = "dim = 2\nl_max = 12\nn = 2\nsamples = 300\nseed = 9\n";
    for cmd in ["estimate", "invariance-test", "sample"] {
        run(a.path(), cfg, &[cmd, "--workers", "1"]);
        run(b.path(), cfg, &[cmd]);
        let ra = fs::read_to_string(a.path().join("out/report.json")).unwrap();
        let rb = fs::read_to_string(b.path().join("out/report.json")).unwrap();
        assert_eq!(ra, rb, "{cmd}");
    }
}
