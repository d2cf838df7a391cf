use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fibwalk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fibwalk"))
        .args(args)
        .env_remove("FIBWALK_PRECISION_CAP")
        .output()
        .expect("binary runs")
}

fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schema")
}

/// Parses stdout and checks it against the shipped schema of `command`.
fn checked_json(out: &Output, command: &str) -> Value {
    let v: Value = serde_json::from_slice(&out.stdout).expect("JSON on stdout");
    let schema: Value =
        serde_json::from_str(&std::fs::read_to_string(schema_dir().join(format!("{command}.schema.json"))).unwrap())
            .unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(&v).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{command}: {errors:?}");
    v
}

fn solution_file(dir: &Path) -> PathBuf {
    let path = dir.join("solve.json");
    let out = fibwalk(&[
        "solve",
        "--ell",
        "2",
        "--depth",
        "12",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    path
}

#[test]
fn solve_is_byte_reproducible() {
    let a = fibwalk(&["solve", "--ell", "2", "--depth", "12"]);
    let b = fibwalk(&["solve", "--ell", "2", "--depth", "12"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let v = checked_json(&a, "solve");
    assert!(v["result"]["lambda_star"]
        .as_str()
        .unwrap()
        .starts_with("9.78101749785812"));
}

#[test]
fn bad_depth_is_a_usage_error() {
    assert_eq!(
        fibwalk(&["solve", "--ell", "2", "--depth", "0"]).status.code(),
        Some(64)
    );
    assert_eq!(fibwalk(&["solve", "--depth", "5", "--bogus"]).status.code(), Some(64));
    assert_eq!(
        fibwalk(&["solve", "--ell", "two", "--depth", "5"]).status.code(),
        Some(64)
    );
}

#[test]
fn help_exits_cleanly() {
    let out = fibwalk(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("basin-mc"));
}

#[test]
fn downward_walk_never_escapes() {
    let args = [
        "walk-sim",
        "--point-mass",
        "2",
        "--k0",
        "2",
        "--r0",
        "5",
        "--s",
        "45",
        "--horizon",
        "200",
        "--walkers",
        "500",
        "--seed",
        "4",
    ];
    let out = fibwalk(&args);
    assert_eq!(out.status.code(), Some(0));
    let v = checked_json(&out, "walk-sim");
    assert_eq!(v["result"]["escape_fraction"], "0");
    assert_eq!(fibwalk(&args).stdout, out.stdout);
}

#[test]
fn csv_is_refused_where_unsupported() {
    let out = fibwalk(&[
        "walk-sim",
        "--point-mass",
        "2",
        "--r0",
        "5",
        "--s",
        "45",
        "--horizon",
        "10",
        "--walkers",
        "5",
        "--seed",
        "1",
        "--format",
        "csv",
    ]);
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn geometric_pair_validates() {
    let out = fibwalk(&["validate-scaling", "--geometric", "0.5"]);
    assert_eq!(out.status.code(), Some(0));
    let v = checked_json(&out, "validate-scaling");
    assert_eq!(v["result"]["verdict"]["tail_sum_ratio"]["pass"], true);
}

#[test]
fn written_pairs_can_be_read_back() {
    let dir = tempfile::tempdir().unwrap();
    let first = fibwalk(&["validate-scaling", "--generated-seed", "17"]);
    let v = checked_json(&first, "validate-scaling");
    let input = dir.path().join("pair.json");
    std::fs::write(&input, serde_json::to_string(&v["result"]).unwrap()).unwrap();
    let second = fibwalk(&["validate-scaling", "--input", input.to_str().unwrap()]);
    assert_eq!(second.status.code(), Some(0));
    let w = checked_json(&second, "validate-scaling");
    assert_eq!(v["result"]["verdict"], w["result"]["verdict"]);
}

#[test]
fn scaling_report_from_a_saved_solution() {
    let dir = tempfile::tempdir().unwrap();
    let sol = solution_file(dir.path());
    let out = fibwalk(&["scaling-report", "--solution", sol.to_str().unwrap(), "--depth", "12"]);
    assert_eq!(out.status.code(), Some(0));
    let v = checked_json(&out, "scaling-report");
    let report = &v["result"]["report"];
    let n0 = report["lambda_threshold"].as_u64().unwrap() as usize;
    let lambda_f = report["lambda_f"].as_array().unwrap();
    for entry in &lambda_f[n0..] {
        if let Some(s) = entry.as_str() {
            assert!(s.parse::<f64>().unwrap() > 3.85);
        }
    }
    let csv = fibwalk(&[
        "scaling-report",
        "--solution",
        sol.to_str().unwrap(),
        "--depth",
        "12",
        "--format",
        "csv",
    ]);
    assert!(String::from_utf8_lossy(&csv.stdout).starts_with("n,S_n,side"));
}

#[test]
fn induced_walk_commands_emit_valid_reports() {
    let dir = tempfile::tempdir().unwrap();
    let sol = solution_file(dir.path());
    let sol = sol.to_str().unwrap();
    let nu = fibwalk(&[
        "estimate-nu",
        "--solution",
        sol,
        "--depth",
        "12",
        "--source-level",
        "5",
        "--samples",
        "2000",
        "--seed",
        "1",
    ]);
    assert_eq!(nu.status.code(), Some(0));
    let v = checked_json(&nu, "estimate-nu");
    let total: f64 = v["result"]["nu_hat"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_str().unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-9);
    let basin = fibwalk(&[
        "basin-mc",
        "--solution",
        sol,
        "--depth",
        "12",
        "--samples",
        "100",
        "--horizon",
        "50",
        "--seed",
        "2",
        "--start-level",
        "6",
    ]);
    assert_eq!(basin.status.code(), Some(0));
    let b = checked_json(&basin, "basin-mc");
    assert_eq!(b["result"]["recurrence_fraction"], "1");
    let dist = fibwalk(&[
        "distortion-report",
        "--solution",
        sol,
        "--depth",
        "8",
        "--trials",
        "40",
        "--seed",
        "5",
    ]);
    assert_eq!(dist.status.code(), Some(0));
    checked_json(&dist, "distortion-report");
    let comb = fibwalk(&["combinatorics", "--solution", sol, "--depth", "12"]);
    assert_eq!(comb.status.code(), Some(0));
    checked_json(&comb, "combinatorics");
}

#[test]
fn pipeline_chains_commands() {
    let dir = tempfile::tempdir().unwrap();
    let sol = dir.path().join("solve.json");
    let rep = dir.path().join("report.json");
    let manifest = serde_json::json!({
        "steps": [
            {"name": "solve", "args": ["solve", "--ell", "2", "--depth", "12", "--output", sol]},
            {"name": "report", "args": ["scaling-report", "--solution", sol, "--depth", "12", "--output", rep]},
            {"args": ["solve", "--depth", "0"]},
            {"args": ["validate-scaling", "--geometric", "0.5"]},
        ]
    });
    let path = dir.path().join("manifest.json");
    std::fs::write(&path, manifest.to_string()).unwrap();
    let out = fibwalk(&["pipeline", "--manifest", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(64));
    let v = checked_json(&out, "pipeline");
    assert_eq!(v["result"]["completed"], 3);
    assert!(rep.exists());
}
