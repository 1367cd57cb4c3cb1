//! End-to-end runs of the `phasekit` binary.

use std::path::Path;
use std::process::{Command, Output};

use phasekit::problems::OracleValues;
use phasekit::PhaseSet;

fn phasekit(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phasekit")).args(args).current_dir(dir).output().unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_path(path).unwrap();
    rdr.records().map(|r| r.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn solve_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = phasekit(
        &["solve", "--problem", "legendre", "--param", "16,64", "--repeats", "1", "--out", "a.csv", "--json", "a.json"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("a.csv"));
    assert_eq!(rows[0], ["problem", "param", "time_s", "max_abs_err", "ncoefs", "omega_freq"]);
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1][0], "legendre");
    assert_eq!(rows[2][1].parse::<f64>().unwrap(), 64.0);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.json")).unwrap()).unwrap();
    let records = json.as_array().unwrap();
    assert_eq!(records.len(), 2);
    assert!(records.iter().all(|r| r["passed"] == true));
    assert!(records.iter().all(|r| r["max_abs_err"].as_f64().unwrap() <= 1e-11));
}

#[test]
fn empty_parameter_list_writes_only_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = phasekit(&["solve", "--problem", "third-order", "--param", "", "--repeats", "1"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(csv_rows(&dir.path().join("runs.csv")).len(), 1);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("runs.json")).unwrap()).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 0);
}

#[test]
fn unchecked_runs_leave_the_error_empty() {
    let dir = tempfile::tempdir().unwrap();
    let out = phasekit(&["solve", "--problem", "fourth-order", "--param", "32", "--repeats", "1", "--no-check"], dir.path());
    assert!(out.status.success());
    let rows = csv_rows(&dir.path().join("runs.csv"));
    assert_eq!(rows[1][3], "NaN");
    assert!(rows[1][4].parse::<usize>().unwrap() > 0);
}

#[test]
fn phase_dump_writes_a_phase_set() {
    let dir = tempfile::tempdir().unwrap();
    let out = phasekit(&["phase", "dump", "--problem", "third-order-52", "--param", "40"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ps = PhaseSet::from_json(&std::fs::read_to_string(dir.path().join("phases.json")).unwrap()).unwrap();
    assert_eq!(ps.n, 3);
    assert_eq!(ps.branches.len(), 3);
}

#[test]
fn reference_prints_oracle_values() {
    let dir = tempfile::tempdir().unwrap();
    let out = phasekit(&["reference", "--problem", "legendre", "--param", "64", "--points", "1"], dir.path());
    assert!(out.status.success());
    let v: OracleValues = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v.points, [0.999]);
    assert_eq!(v.values.len(), 1);

    let out = phasekit(&["reference", "--problem", "third-order", "--param", "16", "--points", "5"], dir.path());
    assert!(out.status.success());
    let v: OracleValues = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v.points.len(), 5);
    assert!(v.values.iter().all(|z| z.norm().is_finite()));
}

#[test]
fn bad_arguments_fail() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["solve", "--problem", "bessel", "--param", "1"][..],
        &["solve", "--problem", "legendre", "--param", "x"],
        &["solve", "--problem", "legendre", "--param", "16", "--window", "0.1"],
        &["phase", "dump", "--problem", "legendre"],
    ] {
        let out = phasekit(args, dir.path());
        assert!(!out.status.success(), "{args:?}");
    }
    // a window outside the interval is reported as a failed run
    let out = phasekit(
        &["solve", "--problem", "third-order", "--param", "16", "--window", "2,3", "--repeats", "1"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    // an unwritable output path is an I/O error
    let out = phasekit(
        &["solve", "--problem", "legendre", "--param", "16", "--repeats", "1", "--out", "missing/dir/a.csv"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}
