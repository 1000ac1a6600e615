use std::path::Path;
use std::process::{Command, Output};

use dig_core::catalog::builtin;
use dig_core::dynamics::growth_rate;
use dig_core::io::{environment_to_json, model_to_json, resolve_model};
use dig_core::stochastic::{EnvironmentState, MarkovEnvironment};
use dig_core::ModelParameters;
use nalgebra::{DMatrix, DVector};
use serde_json::Value;

fn dig(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dig"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json_stdout(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn error_of(out: &Output) -> Value {
    let v: Value = serde_json::from_slice(&out.stderr).expect("stderr is JSON");
    v["error"].clone()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let headers = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (headers, rows)
}

#[test]
fn limits_at_m_star_vanish() {
    let v = json_stdout(&dig(&["limits", "ab1", "--m", "0.5555555"]));
    assert!(v["lambda_m_inf"].as_f64().unwrap().abs() < 1e-6);
    assert!((v["m_star"]["m_star"].as_f64().unwrap() - 5.0 / 9.0).abs() < 1e-9);
}

#[test]
fn lambda_cross_check_agrees() {
    let v = json_stdout(&dig(&["lambda", "ab1", "--m", "1", "--T", "5", "--check-integral"]));
    assert!(v["cross_checks"]["integral_error"].as_f64().unwrap() <= 1e-6);
    let pi: Vec<f64> = v["pi"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn errors_are_json_with_exit_codes() {
    let out = dig(&["lambda", "no_such_model", "--m", "1", "--T", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_of(&out)["exit_code"], 2);

    let out = dig(&["lambda", "ab1", "--m", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_of(&out)["kind"], "UsageError");

    let out = dig(&["lambda", "ab1", "--m", "1", "--T", "1", "--unknown"]);
    assert_eq!(out.status.code(), Some(2));

    let out = dig(&["lambda", "ab1", "--m", "-1", "--T", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());

    let out = dig(&["--format", "csv", "classify", "ab1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_exits_cleanly() {
    assert!(dig(&["--help"]).status.success());
    assert!(dig(&["--version"]).status.success());
}

#[test]
fn sweep_csv_is_deterministic() {
    let args = ["sweep", "abc_two_patch", "--m-range", "0.1:10:6", "--T-range", "0.1:100:5"];
    let a = dig(&args);
    let b = dig(&["--jobs", "1", args[0], args[1], args[2], args[3], args[4], args[5]]);
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("m,T,lambda,status"));
    assert_eq!(lines.count(), 30);
}

#[test]
fn critical_writes_curve_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curve.csv");
    let summary = json_stdout(&dig(&[
        "critical",
        "ab1",
        "--m-range",
        "0.01:100:32",
        "--T-range",
        "0.01:1000:32",
        "--out",
        path.to_str().unwrap(),
    ]));
    assert!(summary["branches"].as_u64().unwrap() >= 1);
    let (headers, rows) = read_csv(&path);
    assert_eq!(headers, ["branch", "m", "T", "nu", "lambda_residual"]);
    assert_eq!(rows.len() as u64, summary["rows"].as_u64().unwrap());
}

#[test]
fn reproduced_curve_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = json_stdout(&dig(&[
        "reproduce",
        "fig2",
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--resolution",
        "24",
    ]));
    let files = manifest["files"].as_array().unwrap();
    assert!(files.iter().all(|f| Path::new(f["path"].as_str().unwrap()).exists()));
    let (headers, rows) = read_csv(&dir.path().join("fig2_curve.csv"));
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (im, it, ir) = (col("m"), col("T"), col("lambda_residual"));
    let model = builtin("ab1").unwrap();
    assert!(!rows.is_empty());
    for row in &rows {
        let m: f64 = row[im].parse().unwrap();
        let t: f64 = row[it].parse().unwrap();
        let stored: f64 = row[ir].parse().unwrap();
        let lambda = growth_rate(&model, &ModelParameters::new(m, t).unwrap()).unwrap().lambda;
        assert!(lambda.abs() <= 1e-8, "Λ({m}, {t}) = {lambda}");
        assert!((lambda.abs() - stored).abs() <= 1e-12, "{lambda} vs {stored}");
    }
}

#[test]
fn unknown_figure_is_rejected() {
    let out = dig(&["reproduce", "fig99", "--out-dir", "/nonexistent/never"]);
    assert!(!out.status.success());
    assert_eq!(error_of(&out)["kind"], "UnknownFigure");
}

#[test]
fn model_files_are_read_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    std::fs::write(&path, model_to_json(&builtin("ab2s").unwrap()).unwrap()).unwrap();
    let before = std::fs::read(&path).unwrap();
    let mtime = std::fs::metadata(&path).unwrap().modified().unwrap();
    let p = path.to_str().unwrap();
    json_stdout(&dig(&["validate", p]));
    json_stdout(&dig(&["lambda", p, "--m", "0.2", "--T", "3"]));
    json_stdout(&dig(&["classify", p]));
    assert_eq!(std::fs::read(&path).unwrap(), before);
    assert_eq!(std::fs::metadata(&path).unwrap().modified().unwrap(), mtime);

    let from_file = resolve_model(p).unwrap();
    let params = ModelParameters::new(0.2, 3.0).unwrap();
    let a = growth_rate(&from_file, &params).unwrap().lambda;
    let b = growth_rate(&builtin("ab2s").unwrap(), &params).unwrap().lambda;
    assert_eq!(a, b);
}

#[test]
fn simulate_reads_environment_file() {
    let l = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]);
    let states = vec![
        EnvironmentState {
            growth: DVector::from_vec(vec![0.5, -1.5]),
            migration: l.clone(),
        },
        EnvironmentState {
            growth: DVector::from_vec(vec![-1.5, 0.5]),
            migration: l,
        },
    ];
    let q = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]);
    let env = MarkovEnvironment::new(states, q).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("env.json");
    std::fs::write(&path, environment_to_json(&env).unwrap()).unwrap();
    let args = ["simulate", path.to_str().unwrap(), "--m", "1", "--T", "1", "--horizon", "2000", "--seed", "5"];
    let a = json_stdout(&dig(&args));
    let b = json_stdout(&dig(&args));
    assert_eq!(a, b);
    let hat = a["lambda_hat"].as_f64().unwrap();
    let se = a["stderr"].as_f64().unwrap();
    assert!(hat <= a["limits"]["chi"].as_f64().unwrap() + 3.0 * se);
}
