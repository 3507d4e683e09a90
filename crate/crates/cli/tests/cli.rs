use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn capplan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_capplan")).args(args).output().expect("spawn capplan")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_problem(dir: &Path, json: &str) -> String {
    let path = dir.join("problem.json");
    fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn missing_file_exits_2() {
    let out = capplan(&["--problem", "/nonexistent/p.json", "--approach", "det"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn malformed_json_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_problem(dir.path(), "{\"horizon\": 10, \"jobs\": [");
    let out = capplan(&["--problem", &path, "--approach", "det"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn cycle_exits_2_and_names_the_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_problem(
        dir.path(),
        r#"{"horizon": 50, "jobs": [
            {"id": "a", "q": 0, "f": 5, "u": 40, "deps": ["b"], "history": [[3, 1]]},
            {"id": "b", "q": 0, "f": 5, "u": 40, "deps": ["a"], "history": [[3, 1]]}
        ]}"#,
    );
    let out = capplan(&["--problem", &path, "--approach", "det"]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains('a') && err.contains('b'), "{err}");
}

#[test]
fn generate_writes_a_loadable_problem() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gen.json");
    let out = capplan(&["--generate", "n=12,seed=4", "--out", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let p = capplan::io::load_problem(&path).unwrap();
    assert_eq!(p.jobs.len(), 12);
    assert_eq!(p, capplan::synthgen::generate(&capplan::synthgen::GenConfig::new(12, 4)).unwrap());
}

#[test]
fn approach_none_reports_the_manual_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("none.json");
    let out = capplan(&[
        "--generate",
        "n=8,seed=2",
        "--approach",
        "none",
        "--runs",
        "5",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(report["fallback"], false);
    assert_eq!(report["per_run"].as_array().unwrap().len(), 5);
    for job in report["problem"]["jobs"].as_array().unwrap() {
        assert_eq!(report["schedule"][job["id"].as_str().unwrap()], job["q"]);
    }
    let csv = fs::read_to_string(dir.path().join("none.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn small_sweep_writes_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("sweep.json");
    let out = capplan(&[
        "--generate",
        "n=8,seed=1",
        "--sweep",
        "--samples-grid",
        "2,4",
        "--tolerance-grid",
        "0.1,0.5",
        "--runs",
        "3",
        "--node-limit",
        "2000",
        "--search-iterations",
        "2000",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    assert!(report.is_object());
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn unknown_approach_is_a_usage_error() {
    let out = capplan(&["--generate", "n=3", "--approach", "magic"]);
    assert_eq!(code(&out), 2);
}
