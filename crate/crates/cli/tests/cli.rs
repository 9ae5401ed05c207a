use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn wcl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wcl")).args(args).output().expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout holds the JSON report")
}

const CIRCLE: &str = r#"{"s":2,"F":[[1,0],[0,1]],"t":1}"#;

#[test]
fn asymmetric_form_exits_4_and_names_the_entry() {
    let out = wcl(&["count", "--form", r#"{"s":2,"F":[[1,2],[3,1]],"t":1}"#]);
    assert_eq!(out.status.code(), Some(4));
    let v = report(&out);
    assert_eq!(v["errors"][0]["kind"], "invalid_input");
    assert_eq!(v["errors"][0]["detail"]["entry"], serde_json::json!([0, 1]));
}

#[test]
fn definite_predict_exits_3() {
    let out = wcl(&["predict", "--form", CIRCLE]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(report(&out)["errors"][0]["kind"], "infeasible");
}

#[test]
fn budget_refusal_exits_2_and_names_the_parameter() {
    let out = wcl(&["count", "--form", CIRCLE, "--x", "1000", "--count-cap", "10"]);
    assert_eq!(out.status.code(), Some(2));
    let v = report(&out);
    assert!(v["errors"][0]["detail"]["parameter"].is_string());
    assert_eq!(v["errors"][0]["detail"]["required"], "1000");
}

#[test]
fn missing_form_and_unknown_key_exit_4() {
    assert_eq!(wcl(&["count"]).status.code(), Some(4));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, format!(r#"{{"form": {CIRCLE}, "bogus": 1}}"#)).unwrap();
    let out = wcl(&["count", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stdout).contains("bogus"));
}

#[test]
fn bad_flag_exits_4() {
    assert_eq!(wcl(&["count", "--no-such-flag"]).status.code(), Some(4));
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"x_grid": [7]}"#).unwrap();
    let out = wcl(&["count", "--form", CIRCLE, "--x", "5", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(&out)["results"]["counts"][0]["x"].as_f64(), Some(7.0));
}

#[test]
fn primes_audits_pass() {
    let out = wcl(&["check-conditions", "--form", CIRCLE, "--weights", "primes"]);
    assert_eq!(out.status.code(), Some(0));
    let v = report(&out);
    assert_eq!(v["results"]["exact_audits_passed"], true);
    assert_eq!(v["results"]["kappa"]["6"][5], "1/2");
}

fn run_into(dir: &Path, threads: &str) -> (Vec<u8>, Vec<u8>) {
    let form = r#"{"s":3,"F":[[1,0,0],[0,1,0],[0,0,-2]],"t":0}"#;
    let out = wcl(&[
        "predict", "--form", form, "--weights", "kfree", "--x", "12,16", "--samples", "20000", "--seed", "7", "--p-max", "12",
        "--threads", threads, "--out", dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    (fs::read(dir.join("predict.json")).unwrap(), fs::read(dir.join("predict.csv")).unwrap())
}

#[test]
fn seeded_reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let ra = run_into(a.path(), "1");
    let rb = run_into(a.path(), "1");
    assert_eq!(ra, rb);
    let rc = run_into(c.path(), "4");
    let strip = |j: &[u8]| {
        let mut v: Value = serde_json::from_slice(j).unwrap();
        v["config"]["threads"] = Value::Null;
        v
    };
    assert_eq!(strip(&ra.0)["results"], strip(&rc.0)["results"]);
}

#[test]
fn csv_and_json_agree_digit_for_digit() {
    let dir = tempfile::tempdir().unwrap();
    let (json, csv) = run_into(dir.path(), "2");
    let json = String::from_utf8(json).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    for line in csv.lines().skip(1) {
        for field in line.split(',').skip(1).filter(|f| f.contains('e')) {
            assert!(json.contains(field), "{field} missing from JSON");
        }
    }
}
