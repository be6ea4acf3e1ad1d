use std::path::Path;
use std::process::{Command, Output};

fn fracbloom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracbloom")).args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const MINIMAL: &str = r#"{
    "space": {"generator": {"kind": "grid-1d", "size": 4}},
    "kernel": {"family": "hilbert-grid"},
    "suites": ["bloom-weights"]
}"#;

#[test]
fn run_minimal_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    let out = fracbloom(&["run", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["results"][0]["status"], "pass");
    assert_eq!(report["violations"], 0);
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &MINIMAL.replace("\"suites\"", "\"p\": 4, \"q\": 2, \"suites\""));
    let out = fracbloom(&["run", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("exponents"));

    let out = fracbloom(&["run", &cfg, "--suite", "nonsense"]);
    assert_eq!(out.status.code(), Some(2));
    let out = fracbloom(&["space", "profile", "--space", "grid-1d:1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn empty_annulus_exits_three() {
    let out = fracbloom(&["awf", "decompose", "--space", "grid-1d:8", "--center", "4", "--radius", "2.5"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("annulus"));
}

#[test]
fn lower_suites_write_side_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{
            "space": {"generator": {"kind": "tree", "size": 16}},
            "kernel": {"family": "power-sign"},
            "weights": {"kind": "log-uniform", "spread": 0.2},
            "suites": ["lower-median", "lower-awf"],
            "seeds": [5]
        }"#,
    );
    let report = dir.path().join("report.json");
    let out = fracbloom(&["run", &cfg, "--out", report.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let parsed: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(parsed["results"].as_array().unwrap().len(), 2);
    for suite in ["lower-median", "lower-awf"] {
        let table = std::fs::read_to_string(dir.path().join(format!("report.{suite}.5.csv"))).unwrap();
        let mut lines = table.lines();
        assert!(lines.next().unwrap().starts_with("size,center,radius"));
        assert!(lines.count() > 10);
    }
}

#[test]
fn subcommands_emit_json() {
    for args in [
        vec!["space", "profile", "--space", "snowflake:8:0.5"],
        vec!["dyadic", "verify", "--space", "grid-1d:16", "--count", "2"],
        vec!["weights", "bloom", "--space", "tree:16", "--lambda1", "log-uniform:0.3"],
        vec!["kernel", "certify", "--space", "grid-1d:12", "--kernel", "hilbert-grid"],
        vec!["op", "norm", "--space", "grid-1d:5", "--method", "brute-oracle"],
        vec!["verify", "upper", "--space", "grid-1d:12"],
        vec!["median", "decompose", "--space", "grid-1d:8", "--base", "1:1.5", "--companion", "6:1.5"],
    ] {
        let out = fracbloom(&args);
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        let _: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    }
}
