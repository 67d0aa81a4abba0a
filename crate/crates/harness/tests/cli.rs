use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn hessmc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hessmc"))
        .args(args)
        .env("HESSMC_OUTPUT_DIR", dir.join("out"))
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn without_time(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("wall_time_s");
    v
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const FLAT_HESSIAN: &str = r#"
model = "euclidean:1"
function = "square:1"
estimator = "hessian_fk"
t = 1.0
n_paths = 20000
"#;

#[test]
fn flat_hessian_run_writes_a_passing_record() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "flat.toml", FLAT_HESSIAN);
    let o = hessmc(dir.path(), &["run", s(&cfg)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rec = json(&dir.path().join("out/flat.json"));
    assert_eq!(rec["pass"], true);
    assert_eq!(rec["status"], "ok");
    let mean = rec["result"]["mean"][0].as_f64().unwrap();
    assert!((mean - 2.0).abs() < 0.1, "{mean}");
    assert_eq!(rec["config"]["function"], "square:1");
}

#[test]
fn sphere_semigroup_matches_the_eigenfunction_value() {
    let dir = TempDir::new().unwrap();
    let cfg = config(
        dir.path(),
        "sphere.toml",
        "model = \"sphere:r=1\"\nfunction = \"coord:3\"\nestimator = \"feynman_kac\"\nt = 0.5\nn_paths = 20000\n",
    );
    let o = hessmc(dir.path(), &["run", s(&cfg)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let rec = json(&dir.path().join("out/sphere.json"));
    let check = &rec["checks"][0];
    assert!((check["oracle"].as_f64().unwrap() - (-0.5f64).exp()).abs() < 1e-12);
    assert_eq!(check["pass"], true);
}

#[test]
fn reruns_are_identical_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "flat.toml", FLAT_HESSIAN);
    let mut records = Vec::new();
    for threads in ["1", "3", "1"] {
        let out = dir.path().join(format!("r{}.json", records.len()));
        let o = hessmc(dir.path(), &["run", s(&cfg), "--threads", threads, "--n-paths", "3000", "--output", s(&out)]);
        assert_eq!(code(&o), 0);
        let mut v = without_time(json(&out));
        v["config"].as_object_mut().unwrap().remove("threads");
        v["config"].as_object_mut().unwrap().remove("output");
        records.push(v);
    }
    assert_eq!(records[0], records[1]);
    assert_eq!(records[0], records[2]);
}

#[test]
fn csv_records_have_the_table_header() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "flat.toml", FLAT_HESSIAN);
    let o = hessmc(dir.path(), &["run", s(&cfg), "--n-paths", "1000", "--format", "csv"]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(dir.path().join("out/flat.csv")).unwrap();
    assert!(text.starts_with("label,mean,stderr,oracle,abs_err,pass\n"), "{text}");
}

#[test]
fn misaligned_horizon_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "flat.toml", FLAT_HESSIAN);
    let o = hessmc(dir.path(), &["run", s(&cfg), "--dt", "0.3"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("dt"));
    assert!(!dir.path().join("out/flat.json").exists());
}

#[test]
fn unknown_keys_and_flags_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "bad.toml", &format!("{FLAT_HESSIAN}colour = \"red\"\n"));
    assert_eq!(code(&hessmc(dir.path(), &["run", s(&cfg)])), 2);
    assert_eq!(code(&hessmc(dir.path(), &["run", s(&cfg), "--bogus"])), 2);
    assert_eq!(code(&hessmc(dir.path(), &["run", "missing.toml"])), 2);
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "flat.toml", FLAT_HESSIAN);
    fs::write(dir.path().join("blocker"), "").unwrap();
    let out = dir.path().join("blocker/record.json");
    let o = hessmc(dir.path(), &["run", s(&cfg), "--n-paths", "200", "--output", s(&out)]);
    assert_eq!(code(&o), 3);
}

#[test]
fn listings_succeed() {
    let dir = TempDir::new().unwrap();
    let o = hessmc(dir.path(), &["list-models"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("sphere:r=1"));
    let o = hessmc(dir.path(), &["list-estimators"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("doubly_damped_check"));
}

#[test]
fn flipped_curvature_fails_verification() {
    let dir = TempDir::new().unwrap();
    let o = hessmc(dir.path(), &["verify", "--only", "11", "--mutate", "flip-curvature"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
    let o = hessmc(dir.path(), &["verify", "--only", "11"]);
    assert_eq!(code(&o), 0);
}

fn sweep_csv(dir: &Path, stem: &str) -> (String, Value) {
    let csv = fs::read_to_string(dir.join(format!("out/{stem}-sweep.csv"))).unwrap();
    (csv, json(&dir.join(format!("out/{stem}-sweep.json"))))
}

fn fit<'a>(summary: &'a Value, name: &str) -> &'a Value {
    summary["fits"]
        .as_array()
        .unwrap()
        .iter()
        .find(|f| f["name"].as_str().unwrap().starts_with(name))
        .unwrap_or_else(|| panic!("no fit {name} in {summary}"))
}

#[test]
fn step_size_sweep_shows_first_order_convergence() {
    let dir = TempDir::new().unwrap();
    let cfg = config(
        dir.path(),
        "order.toml",
        "model = \"sphere:r=1\"\nfunction = \"coord:3\"\nestimator = \"feynman_kac\"\nt = 0.2\nn_paths = 20000\n",
    );
    let o = hessmc(dir.path(), &["sweep", s(&cfg), "--axis", "dt", "--values", "1e-2,5e-3,2.5e-3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let (csv, summary) = sweep_csv(dir.path(), "order");
    assert_eq!(csv.lines().next().unwrap(), "axis_value,mean,stderr,oracle,abs_err,pass");
    assert_eq!(csv.lines().count(), 4);
    assert!(fit(&summary, "weak_order")["value"].as_f64().unwrap() >= 0.8);
}

#[test]
fn path_count_sweep_halves_the_standard_error() {
    let dir = TempDir::new().unwrap();
    let cfg = config(
        dir.path(),
        "paths.toml",
        "model = \"euclidean:1\"\nfunction = \"sin:1\"\nestimator = \"feynman_kac\"\nt = 1.0\ndt = 0.25\n",
    );
    let o = hessmc(dir.path(), &["sweep", s(&cfg), "--axis", "n_paths", "--values", "10000,40000,160000"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let (_, summary) = sweep_csv(dir.path(), "paths");
    assert_eq!(fit(&summary, "stderr_slope")["pass"], true);
    assert_eq!(fit(&summary, "stderr_ratio")["pass"], true);
}

#[test]
fn horizon_sweep_of_the_second_order_weight() {
    let dir = TempDir::new().unwrap();
    let cfg = config(
        dir.path(),
        "nt.toml",
        "model = \"euclidean:2\"\nfunction = \"const:1\"\nestimator = \"nt_scaling\"\nt = 0.4\ndt = 1.25e-3\nn_paths = 5000\n",
    );
    let o = hessmc(dir.path(), &["sweep", s(&cfg), "--axis", "t", "--values", "0.05,0.1,0.2,0.4"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let (_, summary) = sweep_csv(dir.path(), "nt");
    let slope = fit(&summary, "log_log_slope")["value"].as_f64().unwrap();
    assert!((slope + 1.0).abs() <= 0.2, "{slope}");
}

#[test]
fn a_failed_cell_does_not_abort_the_sweep() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "cells.toml", FLAT_HESSIAN);
    let o = hessmc(dir.path(), &["sweep", s(&cfg), "--axis", "dt", "--values", "0.03,0.25", "--n-paths", "2000"]);
    let (csv, summary) = sweep_csv(dir.path(), "cells");
    assert_eq!(code(&o), 1);
    assert_eq!(csv.lines().count(), 3);
    assert_eq!(summary["errors"].as_array().unwrap().len(), 1);
    assert_eq!(summary["rows"][1]["pass"], true);
}
