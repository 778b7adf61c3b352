use std::path::PathBuf;
use std::process::{Command, Output};

fn ssq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssq")).args(args).output().expect("ssq runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name)
}

#[test]
fn validate_reports_the_diffusion_coefficients() {
    let out = ssq(&["validate"]);
    assert!(out.status.success());
    let value: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(value["n"], 2);
    assert!((value["sigma2"].as_f64().unwrap() - 0.1).abs() < 1e-12);
}

#[test]
fn subcritical_model_is_a_validation_error() {
    let path = scratch("subcritical.json");
    std::fs::write(&path, r#"{"n": 2, "lambda": [5, 5], "mu": [20, 20]}"#).unwrap();
    let out = ssq(&["validate", "--model", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn unknown_config_field_is_rejected() {
    let path = scratch("typo.json");
    std::fs::write(&path, r#"{"experiment": "estimate-q", "replications": 10}"#).unwrap();
    let out = ssq(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn estimate_q_writes_a_result_object() {
    let prefix = scratch("estimate");
    let out = ssq(&["estimate-q", "--n", "100", "--r", "5", "--seed", "4", "--out", prefix.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(prefix.with_extension("json")).unwrap();
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(value["seed"], 4);
    assert_eq!(value["n"], 100);
    let q: f64 = value["values"]["q_hat"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
    assert!((q + value["values"]["none_frac"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn sweep_csv_does_not_depend_on_workers() {
    let run = |workers: &str| {
        let out =
            ssq(&["sweep", "--family", "d", "--grid", "0.3,0.7,1.2", "--n", "100", "--r", "5", "--workers", workers]);
        assert!(out.status.success());
        stdout(&out)
    };
    let one = run("1");
    assert_eq!(one, run("2"));
    let lines: Vec<&str> = one.lines().collect();
    assert!(lines[0].starts_with("sweep_param,value,q1_hat"));
    assert_eq!(lines.len(), 4);
}

#[test]
fn simulate_and_wbm_sim_emit_csv() {
    let out = ssq(&["simulate", "--r", "2", "--horizon", "0.05", "--start", "3,1"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.lines().next(), Some("t,class,kind,Q1,Q2"));
    assert!(text.lines().count() > 1);

    let out = ssq(&["wbm-sim", "--horizon", "0.1", "--dt", "0.01", "--q", "0.4,0.6"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.lines().next(), Some("t,v1,v2"));
    assert_eq!(text.lines().count(), 12);
}
