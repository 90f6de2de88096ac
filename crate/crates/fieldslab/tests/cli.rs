use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fieldslab::emit::Table;
use serde_json::{json, Value};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fieldslab"))
}

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn write_config(dir: &TempDir, cfg: &Value) -> PathBuf {
    let path = dir.path().join("config.json");
    fs::write(&path, cfg.to_string()).unwrap();
    path
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    bin().args(args).arg("--config").arg(config).arg("--out").arg(out).output().unwrap()
}

fn meta(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("meta.json")).unwrap()).unwrap()
}

fn small_exact() -> Value {
    json!({
        "model": { "sigma": [-1, 0, 1], "alpha": [1], "n": [2, 3] },
        "seed": 11,
        "exact": { "orders": [1], "max_particles": 2, "thetas": [0.3], "configs_per_point": 5 }
    })
}

fn small_dual() -> Value {
    json!({
        "model": { "sigma": [0, 1], "alpha": [1], "n": [4] },
        "theta": 0.4,
        "times": [0.05],
        "samples": 400,
        "seed": 5,
        "dual": { "tuples": [[0], [0, 1]] }
    })
}

#[test]
fn exact_check_succeeds_and_writes_meta() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let o = run(&["exact-check"], &write_config(&dir, &small_exact()), &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let m = meta(&out);
    assert_eq!(m["subcommand"], "exact-check");
    assert_eq!(m["seed"], 11);
    assert_eq!(m["version"], fieldslab::VERSION);
    assert_eq!(m["passed"], true);
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    for t in m["tables"].as_array().unwrap() {
        assert!(out.join(t.as_str().unwrap()).exists(), "{t}");
    }
}

#[test]
fn perturbed_rates_exit_with_failure() {
    let dir = TempDir::new().unwrap();
    let mut cfg = small_exact();
    cfg["exact"]["identities"] = json!(["duality"]);
    cfg["exact"]["perturbation"] = json!({ "site": 0, "epsilon": 0.01 });
    let out = dir.path().join("out");
    let o = run(&["exact-check"], &write_config(&dir, &cfg), &out);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(meta(&out)["passed"], false);
}

#[test]
fn empty_grid_is_an_error() {
    let dir = TempDir::new().unwrap();
    let mut cfg = small_exact();
    cfg["model"]["n"] = json!([]);
    let o = run(&["exact-check"], &write_config(&dir, &cfg), &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no instances"));
}

#[test]
fn unknown_fields_are_rejected() {
    let dir = TempDir::new().unwrap();
    let mut cfg = small_exact();
    cfg["sampels"] = json!(10);
    let o = run(&["exact-check"], &write_config(&dir, &cfg), &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn json_tables_round_trip_csv_values() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, &small_dual());
    let (csv_out, json_out) = (dir.path().join("csv"), dir.path().join("json"));
    assert!(run(&["dual-check"], &config, &csv_out).status.success());
    assert!(run(&["dual-check", "--format", "json"], &config, &json_out).status.success());
    let from_json = Table::from_json(&fs::read_to_string(json_out.join("dual.json")).unwrap()).unwrap();
    assert_eq!(from_json.to_csv().unwrap(), fs::read_to_string(csv_out.join("dual.csv")).unwrap());
    assert_eq!(meta(&json_out)["format"], "json");
}

#[test]
fn output_is_independent_of_thread_count() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, &small_dual());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run(&["dual-check", "--threads", "1"], &config, &a).status.success());
    assert!(run(&["dual-check", "--threads", "4"], &config, &b).status.success());
    assert_eq!(fs::read(a.join("dual.csv")).unwrap(), fs::read(b.join("dual.csv")).unwrap());
}

#[test]
fn seed_override_changes_meta_and_results() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, &small_dual());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run(&["dual-check"], &config, &a).status.success());
    assert!(run(&["dual-check", "--seed", "99"], &config, &b).status.success());
    let (ma, mb) = (meta(&a), meta(&b));
    assert_eq!(mb["seed"], 99);
    assert_ne!(ma["config_hash"], mb["config_hash"]);
    assert_ne!(fs::read(a.join("dual.csv")).unwrap(), fs::read(b.join("dual.csv")).unwrap());
}

#[test]
fn shipped_exact_config_passes() {
    let dir = TempDir::new().unwrap();
    let o = run(&["exact-check"], &repo_config("exact-check.json"), &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn shipped_configs_parse() {
    for name in ["exact-check.json", "hydro-sweep.json", "fluct-sweep.json", "dual-check.json"] {
        fieldslab::config::ExperimentConfig::load(&repo_config(name)).unwrap_or_else(|e| panic!("{name}: {e:#}"));
    }
}
