use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dpw_core::reference::example_s6;
use dpw_core::surface::SurfaceGrid;
use dpw_core::C64;
use serde_json::Value;

fn potential(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../potentials").join(name)
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dpw-cli-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn dpw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpw")).args(args).output().unwrap()
}

fn error_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

#[test]
fn construct_writes_csv_that_reads_back() {
    let out = tmp("small.csv");
    let res = dpw(&[
        "construct",
        "--potential",
        potential("s6.pot").to_str().unwrap(),
        "--grid",
        "re:-0.5:0.5:5,im:-0.5:0.5:5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let report: Value = serde_json::from_slice(&res.stdout).unwrap();
    assert!(report.is_object());
    let s = SurfaceGrid::read_csv(std::fs::File::open(&out).unwrap()).unwrap();
    assert_eq!(s.ok_count(), 25);
    for (i, y) in s.points.iter().enumerate() {
        let want = example_s6(s.grid.point(i), C64::new(1.0, 0.0));
        assert!((y.as_ref().unwrap() - want).amax() < 1e-8);
    }
}

#[test]
fn missing_file_is_io_error() {
    let out = tmp("never.csv");
    let res = dpw(&["construct", "--potential", "/nonexistent/x.pot", "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(error_json(&res)["error"]["exit_code"], 2);
}

#[test]
fn broken_potential_is_validation_error() {
    let out = tmp("broken.csv");
    let res = dpw(&["construct", "--potential", potential("broken.pot").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(3));
    assert!(error_json(&res)["error"]["message"].as_str().unwrap().len() > 0);
}

#[test]
fn bad_lambda_and_unknown_flag_are_usage_errors() {
    let out = tmp("l.csv");
    let s6 = potential("s6.pot");
    let res = dpw(&["construct", "--potential", s6.to_str().unwrap(), "--lambda", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    let res = dpw(&["construct", "--bogus"]);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(error_json(&res)["error"]["exit_code"], 2);
}

#[test]
fn homogeneous_energy_table() {
    let res = dpw(&["homogeneous", "--family", "ejiri", "--b", "1", "--energy", "1,1"]);
    assert!(res.status.success());
    let text = String::from_utf8_lossy(&res.stdout);
    assert!(text.contains("34.18931"), "{text}");
}
