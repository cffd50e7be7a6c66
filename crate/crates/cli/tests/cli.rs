use std::process::{Command, Output};

fn hjlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hjlab")).args(args).output().expect("spawn hjlab")
}

#[test]
fn legendre_passes_and_prints_json() {
    let out = hjlab(&["legendre", "--samples", "50"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["pass"], true);
    assert_eq!(v["samples"], 50);
}

#[test]
fn failed_check_exits_one() {
    let out = hjlab(&["legendre", "--samples", "50", "--tol", "1e-300"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_family_exits_two() {
    let out = hjlab(&["legendre", "--family", "nope"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));
}

#[test]
fn bad_config_file_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    std::fs::write(&path, r#"{"bogus": 1}"#).unwrap();
    let out = hjlab(&["legendre", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));

    let out = hjlab(&["legendre", "--config", dir.path().join("missing.json").to_str().unwrap()]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn dimension_mismatch_exits_two() {
    let out = hjlab(&["metric", "--t", "1", "--y", "0.5", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn metric_writes_output_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("m.json");
    let trace = dir.path().join("curve.csv");
    let out = hjlab(&[
        "metric",
        "--t",
        "1",
        "--y",
        "0.5",
        "-o",
        out_path.to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert!(v["value"].as_f64().unwrap().is_finite());
    let rows = std::fs::read_to_string(&trace).unwrap().lines().count();
    assert!(rows > 2);
}

#[test]
fn burago_decomposes_a_path_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("path.csv");
    std::fs::write(&path, "s,x0,x1\n0,0,0\n1,1,0.5\n2,1.5,2\n3,3,1\n").unwrap();
    let out = hjlab(&["burago", "--path", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["certificate"]["pass"], true);
    assert!(v["decomposition"]["k"].as_u64().unwrap() <= 2);
}

#[test]
fn effective_tables_feed_the_effective_route() {
    let dir = tempfile::tempdir().unwrap();
    let tables = dir.path().join("tables");
    let out = hjlab(&[
        "effective",
        "--levels",
        "3",
        "--q-points",
        "9",
        "--tables",
        tables.to_str().unwrap(),
        "--format",
        "csv",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tables.join("hamiltonian.csv").exists());
    let table = tables.join("lagrangian.csv");
    let out = hjlab(&["solve", "--route", "effective", "--table", table.to_str().unwrap(), "--x-points", "4"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["u"].as_array().unwrap().len(), 4);
}
