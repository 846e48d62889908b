use std::path::Path;
use std::process::{Command, Output};

use blochmps::ground::{load_tensor, rayleigh_energy};
use blochmps::models::ising_model;
use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blochmps")).args(args).env("RUST_LOG", "info").output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const ISING: [&str; 8] = ["--model", "ising", "--g", "1.0", "-N", "6", "-D", "2"];

fn ground_into(dir: &Path) {
    let mut args = vec!["ground"];
    args.extend(ISING);
    args.extend(["--max-iters", "200", "--restarts", "1", "-o", s(dir)]);
    ok(&args);
}

fn dispersion_into(dir: &Path, extra: &[&str]) -> Output {
    let tensor = dir.join("tensor.json");
    let mut args = vec!["dispersion"];
    args.extend(ISING);
    args.extend(["-b", "2", "--tensor-in", s(&tensor), "-o", s(dir)]);
    args.extend(extra);
    ok(&args)
}

#[test]
fn missing_results_dir_is_a_config_error() {
    let out = run(&["exact", "--model", "ising", "--g", "1", "-N", "4", "-o", "/nonexistent/results"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("results_dir"));
}

#[test]
fn missing_model_names_the_field() {
    let out = run(&["exact", "-N", "4"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`model`"));
}

#[test]
fn ground_is_deterministic_and_consistent() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    ground_into(d1.path());
    ground_into(d2.path());
    let t1 = std::fs::read(d1.path().join("tensor.json")).unwrap();
    let t2 = std::fs::read(d2.path().join("tensor.json")).unwrap();
    assert_eq!(t1, t2);
    let summary = json(&d1.path().join("ground-summary.json"));
    assert_eq!(summary["command"], "ground");
    let energy = summary["data"][0]["energy"].as_f64().unwrap();
    let (a, _) = load_tensor(&d1.path().join("tensor.json")).unwrap();
    let direct = rayleigh_energy(&a, &ising_model(1.0), 6).unwrap();
    assert!((energy - direct).abs() <= 1e-12 * direct.abs());
}

#[test]
fn dispersion_csv_matches_json_and_cache_is_reused() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    std::fs::create_dir(&cache).unwrap();
    ground_into(dir.path());
    let cold = dispersion_into(dir.path(), &["--cache-dir", s(&cache)]);
    assert!(String::from_utf8_lossy(&cold.stderr).contains("built and cached"));
    let warm = dispersion_into(dir.path(), &["--cache-dir", s(&cache)]);
    assert!(String::from_utf8_lossy(&warm.stderr).contains("cache hit"));

    let doc = json(&dir.path().join("dispersion.json"));
    let csv = std::fs::read_to_string(dir.path().join("dispersion.csv")).unwrap();
    assert!(csv.starts_with("# blochmps "));
    let rows: Vec<Vec<&str>> =
        csv.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 6 * 2);
    for row in rows {
        let k: usize = row[0].parse().unwrap();
        let i: usize = row[1].parse().unwrap();
        let e: f64 = row[2].parse().unwrap();
        assert_eq!(e, doc["data"]["blocks"][k]["branches"][i]["energy"].as_f64().unwrap());
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    ground_into(dir.path());
    dispersion_into(dir.path(), &["--threads", "1"]);
    let one = std::fs::read(dir.path().join("dispersion.csv")).unwrap();
    dispersion_into(dir.path(), &["--threads", "3"]);
    let three = std::fs::read(dir.path().join("dispersion.csv")).unwrap();
    assert_eq!(one, three);
}

#[test]
fn exact_heisenberg_lists_every_level() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["exact", "--model", "heisenberg", "-N", "8", "-o", s(dir.path())]);
    let doc = json(&dir.path().join("exact.json"));
    assert_eq!(doc["data"]["levels"].as_array().unwrap().len(), 256);
}

#[test]
fn analytic_and_diagonalized_ising_agree() {
    let ed = tempfile::tempdir().unwrap();
    let an = tempfile::tempdir().unwrap();
    ok(&["exact", "--model", "ising", "--g", "0.8", "-N", "8", "--mode", "ed", "-o", s(ed.path())]);
    ok(&["exact", "--model", "ising", "--g", "0.8", "-N", "8", "--mode", "ising-analytic", "-o", s(an.path())]);
    let a = json(&ed.path().join("exact.json"));
    let b = json(&an.path().join("exact.json"));
    let la = a["data"]["levels"].as_array().unwrap();
    let lb = b["data"]["levels"].as_array().unwrap();
    assert_eq!(la.len(), lb.len());
    for (x, y) in la.iter().zip(lb) {
        assert!((x["energy"].as_f64().unwrap() - y["energy"].as_f64().unwrap()).abs() < 1e-9);
    }
}

#[test]
fn self_comparison_has_zero_error() {
    let dir = tempfile::tempdir().unwrap();
    ground_into(dir.path());
    dispersion_into(dir.path(), &[]);
    let disp = dir.path().join("dispersion.json");
    ok(&["compare", "--mps", s(&disp), "--exact", s(&disp), "-o", s(dir.path())]);
    let doc = json(&dir.path().join("compare.json"));
    assert_eq!(doc["data"]["violations"], 0);
    for row in doc["data"]["rows"].as_array().unwrap() {
        assert_eq!(row["rel"].as_f64().unwrap(), 0.0);
    }
}

#[test]
fn dispersion_lies_above_diagonalization() {
    let dir = tempfile::tempdir().unwrap();
    ground_into(dir.path());
    dispersion_into(dir.path(), &[]);
    ok(&["exact", "--model", "ising", "--g", "1.0", "-N", "6", "-o", s(dir.path())]);
    let disp = dir.path().join("dispersion.json");
    let exact = dir.path().join("exact.json");
    let out = ok(&["compare", "--mps", s(&disp), "--exact", s(&exact), "-o", s(dir.path())]);
    assert!(!out.stdout.is_empty());
    let doc = json(&dir.path().join("compare.json"));
    assert_eq!(doc["data"]["violations"], 0);
    assert_eq!(doc["data"]["rows"].as_array().unwrap().len(), 12);
}

#[test]
fn memory_budget_refusal_exits_with_four() {
    let dir = tempfile::tempdir().unwrap();
    ground_into(dir.path());
    let tensor = dir.path().join("tensor.json");
    let mut args = vec!["dispersion"];
    args.extend(ISING);
    args.extend(["--tensor-in", s(&tensor), "-o", s(dir.path()), "--memory-budget", "16"]);
    let out = run(&args);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}
