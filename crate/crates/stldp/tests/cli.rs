use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use stldp::pathio::read_binary;
use stldp::ExperimentConfig;

const RATE_CONFIG: &str = r#"
kind = "rate"

[model]
id = "linear"

[noise]
kind = "additive"
amplitudes = [2.0]

[initial]
profile = "constant"
amplitude = 0.0

[rate.target]
profile = "constant"
amplitude = 1.0
"#;

const EQUIV_CONFIG: &str = r#"
kind = "equiv-curve"

[model]
id = "heat"

[grid]
n_dof = 12

[ensemble]
n_paths = 300
pilot_paths = 100
master_seed = 5
epsilons = [1.0, 0.5, 0.25, 0.125]
"#;

fn stldp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stldp"))
        .args(args)
        .env("STLDP_WORKERS", "1")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn error_kind(out: &Output) -> String {
    let line = String::from_utf8_lossy(&out.stderr);
    let v: Value = serde_json::from_str(line.trim()).unwrap();
    v["error"].as_str().unwrap().to_string()
}

#[test]
fn rate_example_recovers_the_closed_form() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "rate.toml", RATE_CONFIG);
    let out_dir = tmp.path().join("rate");
    let out = stldp(&["run", &cfg, "--output", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rate = json(&out_dir.join("rate.json"));
    let i = rate["estimate"]["i_value"].as_f64().unwrap();
    assert!((0.1225..=0.1275).contains(&i), "{i}");
    assert_eq!(rate["estimate"]["status"], "converged");
    let control = fs::read_to_string(out_dir.join("control.csv")).unwrap();
    assert_eq!(control.lines().count(), 51);

    let report = stldp(&["report", out_dir.to_str().unwrap()]);
    assert!(report.status.success());
    assert!(String::from_utf8_lossy(&report.stdout).contains("i_value"));
    assert!(out_dir.join("report.csv").exists());
}

#[test]
fn rerun_from_manifest_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "equiv.toml", EQUIV_CONFIG);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(stldp(&["run", &cfg, "--output", a.to_str().unwrap()]).status.success());
    let saved = a.join("config.toml");
    assert!(stldp(&["run", saved.to_str().unwrap(), "--output", b.to_str().unwrap()]).status.success());
    for name in ["curve.csv", "equiv_curve.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let (ma, mb) = (json(&a.join("manifest.json")), json(&b.join("manifest.json")));
    assert_eq!(ma["config_hash"], mb["config_hash"]);
    let payload = |m: &Value| -> Vec<Value> {
        m["outputs"].as_array().unwrap().iter().filter(|o| o["file"] != "config.toml").cloned().collect()
    };
    assert_eq!(payload(&ma), payload(&mb));
}

#[test]
fn equiv_curve_report_has_one_row_per_level() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "equiv.toml", EQUIV_CONFIG);
    let dir = tmp.path().join("run");
    assert!(stldp(&["run", &cfg, "--output", dir.to_str().unwrap()]).status.success());
    let out = stldp(&["report", dir.to_str().unwrap()]);
    assert!(out.status.success());
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("self-calibrated"));
    assert!(table.contains("decreasing over last 3"));
    let csv = fs::read_to_string(dir.join("report.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "epsilon,log_scaled,ci_lo,ci_hi,is_bound,n_hits");
    assert_eq!(lines.count(), 4);
    let manifest = json(&dir.join("manifest.json"));
    assert_eq!(manifest["seeds"].as_array().unwrap().len(), 5);
    assert!(manifest["noise_basis"].as_str().unwrap().contains("sine modes"));
}

#[test]
fn audit_command_passes_for_plaplace() {
    let out = stldp(&["audit", "plaplace", "--n", "2000", "--seed", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["violations"].as_array().unwrap().len(), 0);
    assert_eq!(report["n_samples"], 2000);
    assert_eq!(report["model_id"], "plaplace");
}

#[test]
fn simulate_writes_a_readable_binary_path() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "sim.toml",
        "kind = \"simulate\"\n[model]\nid = \"burgers\"\n[grid]\nn_dof = 10\ndt = 0.05\n[simulate]\nseed = 4\n",
    );
    let dir = tmp.path().join("sim");
    assert!(stldp(&["run", &cfg, "--output", dir.to_str().unwrap()]).status.success());
    let path = read_binary(fs::File::open(dir.join("path.bin")).unwrap()).unwrap();
    assert_eq!(path.len(), 21);
    assert_eq!(path.dim(), 10);
    assert_eq!(path.meta.seed, 4);
    let csv = fs::read_to_string(dir.join("path.csv")).unwrap();
    assert_eq!(csv.lines().count(), 22);
}

#[test]
fn report_on_a_directory_without_manifest_fails_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let out = stldp(&["report", tmp.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert_eq!(error_kind(&out), "manifest");
    assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 0);
}

#[test]
fn tampered_output_is_rejected_by_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "rate.toml", RATE_CONFIG);
    let dir = tmp.path().join("rate");
    assert!(stldp(&["run", &cfg, "--output", dir.to_str().unwrap()]).status.success());
    fs::write(dir.join("rate.json"), "{}").unwrap();
    let out = stldp(&["report", dir.to_str().unwrap()]);
    assert!(!out.status.success());
    assert_eq!(error_kind(&out), "manifest");
}

#[test]
fn locked_directory_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "rate.toml", RATE_CONFIG);
    let dir = tmp.path().join("busy");
    fs::create_dir(&dir).unwrap();
    fs::write(dir.join(".lock"), "").unwrap();
    let out = stldp(&["run", &cfg, "--output", dir.to_str().unwrap()]);
    assert!(!out.status.success());
    assert_eq!(error_kind(&out), "locked");
    assert!(!dir.join("manifest.json").exists());
}

#[test]
fn config_errors_name_the_offending_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", "kind = \"rate\"\n[grid]\nbogus = 1\n");
    let out = stldp(&["run", &cfg]);
    assert!(!out.status.success());
    assert_eq!(error_kind(&out), "invalid_config");
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));

    let cfg = write_config(tmp.path(), "d2.toml", "[model]\nid = \"burgers\"\n[model.burgers]\nd = 2\n");
    let out = stldp(&["run", &cfg, "--output", tmp.path().join("d2").to_str().unwrap()]);
    assert!(!out.status.success());
    assert_eq!(error_kind(&out), "model_rejected");
}

#[test]
fn config_hash_ignores_key_order_and_output_dir() {
    let a = ExperimentConfig::from_toml("kind = \"tail\"\n[statistic]\ndelta = 0.3\nradius = 2.0\n", "a").unwrap();
    let mut b = ExperimentConfig::from_toml("kind = \"tail\"\n[statistic]\nradius = 2.0\ndelta = 0.3\n", "b").unwrap();
    b.output_dir = "elsewhere".into();
    assert_eq!(a.hash().unwrap(), b.hash().unwrap());
    let c = ExperimentConfig::from_toml("kind = \"tail\"\n[statistic]\ndelta = 0.31\nradius = 2.0\n", "c").unwrap();
    assert_ne!(a.hash().unwrap(), c.hash().unwrap());
}
