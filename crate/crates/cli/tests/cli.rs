use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const NEUMANN_1: &str = r#"{"m":1,"T1":[[[1,0]]],"T2":[[[1,0]]]}"#;
const CONSTANT_1: &str = r#"{"m":1,"T1":[[[1,0]]],"T2":[[[1,0]]],"H2":[[[0,0]]],"sigma":{"kind":"constant","value":[[[1,0]]]}}"#;
const MIXED_2: &str = r#"{"m":2,"T1":[[[1,0],[0,0]],[[0,0],[0,0]]],"T2":[[[1,0],[0,0]],[[0,0],[1,0]]]}"#;

fn slq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slq")).args(args).env("SLQ_THREADS", "2").output().expect("run slq")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn model_neumann_scalar_constants() {
    let dir = tempfile::tempdir().unwrap();
    let bc = write(dir.path(), "bc.json", NEUMANN_1);
    let out = dir.path().join("model.json");
    assert!(slq(&["model", "--bc", s(&bc), "--nmax", "3", "--out", s(&out)]).status.success());
    let v = json(&out);
    assert_eq!(v["model"]["r"], serde_json::json!([0.0]));
    let a = &v["model"]["A"][0][0][0];
    assert!((a[0].as_f64().unwrap() - 1.0).abs() < 1e-10 && a[1].as_f64().unwrap().abs() < 1e-10);
    assert_eq!(v["entries"].as_array().unwrap().len(), 4);
}

#[test]
fn forward_on_model_reproduces_model_data() {
    let dir = tempfile::tempdir().unwrap();
    let bc = write(dir.path(), "bc.json", MIXED_2);
    let (model, data) = (dir.path().join("model.json"), dir.path().join("data.json"));
    assert!(slq(&["model", "--bc", s(&bc), "--nmax", "4", "--out", s(&model)]).status.success());
    assert!(slq(&["forward", "--config", s(&bc), "--nmax", "4", "--out", s(&data)]).status.success());
    let (m, d) = (json(&model), json(&data));
    let (me, de) = (m["entries"].as_array().unwrap(), d["entries"].as_array().unwrap());
    assert_eq!(me.len(), de.len());
    for (a, b) in me.iter().zip(de) {
        assert_eq!((&a["n"], &a["k"]), (&b["n"], &b["k"]));
        let (la, lb) = (a["lambda"].as_f64().unwrap(), b["lambda"].as_f64().unwrap());
        assert!((la - lb).abs() < 1e-8 * la.max(1.0));
        let (aa, ab) = (a["alpha"].as_array().unwrap(), b["alpha"].as_array().unwrap());
        for (ra, rb) in aa.iter().zip(ab) {
            for (za, zb) in ra.as_array().unwrap().iter().zip(rb.as_array().unwrap()) {
                for part in 0..2 {
                    assert!((za[part].as_f64().unwrap() - zb[part].as_f64().unwrap()).abs() < 1e-6);
                }
            }
        }
    }
}

#[test]
fn forward_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "p.json", CONSTANT_1);
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for out in [&a, &b] {
        let status = Command::new(env!("CARGO_BIN_EXE_slq"))
            .args(["forward", "--config", s(&cfg), "--nmax", "6", "--out", s(out)])
            .env("SLQ_THREADS", "1")
            .status()
            .unwrap();
        assert!(status.success());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn check_reports_corrupted_data_without_failing() {
    let dir = tempfile::tempdir().unwrap();
    let bc = write(dir.path(), "bc.json", NEUMANN_1);
    let data = dir.path().join("data.json");
    assert!(slq(&["model", "--bc", s(&bc), "--nmax", "10", "--out", s(&data)]).status.success());
    let mut v = json(&data);
    let alpha = &mut v["entries"][3]["alpha"][0][0][0];
    *alpha = Value::from(-alpha.as_f64().unwrap());
    let bad = write(dir.path(), "bad.json", &v.to_string());
    let report = dir.path().join("report.json");
    let out = slq(&["check", "--data", s(&bad), "--bc", s(&bc), "--ncut", "10", "--out", s(&report)]);
    assert!(out.status.success());
    let r = json(&report);
    assert_eq!(r["condition_i"]["pass"], Value::Bool(false));
    assert_eq!(r["pass"], Value::Bool(false));
    let out = slq(&["check", "--data", s(&data), "--bc", s(&bc), "--ncut", "10", "--out", s(&report)]);
    assert!(out.status.success());
    assert_eq!(json(&report)["pass"], Value::Bool(true));
}

#[test]
fn inverse_writes_reconstruction_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "p.json", CONSTANT_1);
    let bc = write(dir.path(), "bc.json", NEUMANN_1);
    let (data, recon, csv) = (dir.path().join("d.json"), dir.path().join("r.json"), dir.path().join("s.csv"));
    assert!(slq(&["forward", "--config", s(&cfg), "--nmax", "6", "--out", s(&data)]).status.success());
    let out = slq(&["inverse", "--data", s(&data), "--bc", s(&bc), "--N", "6", "--grid", "51", "--out", s(&recon), "--csv", s(&csv)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&recon);
    assert_eq!(r["sigma"]["x"].as_array().unwrap().len(), 51);
    for key in ["H2", "CN", "gN", "diagnostics"] {
        assert!(r.get(key).is_some(), "{key}");
    }
    assert!(r["diagnostics"]["max_residual"].as_f64().unwrap() < 1e-10);
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 52);
}

#[test]
fn roundtrip_of_model_problem_has_zero_distance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "p.json", NEUMANN_1);
    let report = dir.path().join("rt.json");
    let out = slq(&["roundtrip", "--config", s(&cfg), "--N", "5", "--grid", "41", "--out", s(&report)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&report);
    assert!(r["sigma_distance"].as_f64().unwrap() < 1e-8);
    assert!(r["h2_distance"].as_f64().unwrap() < 1e-8);
    assert!(r["max_reextraction_error"].as_f64().unwrap() < 1e-8);
}

#[test]
fn roundtrip_over_threshold_exits_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "p.json", CONSTANT_1);
    let report = dir.path().join("rt.json");
    let out = slq(&["roundtrip", "--config", s(&cfg), "--N", "4", "--grid", "41", "--threshold", "1e-6", "--out", s(&report)]);
    assert_eq!(out.status.code(), Some(4));
    assert!(report.exists());
}

#[test]
fn unreadable_config_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "p.json", r#"{"m":2,"T1":[[[1,0]]],"T2":[[[1,0]]]}"#);
    let out = slq(&["forward", "--config", s(&cfg), "--nmax", "2", "--out", s(&dir.path().join("d.json"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("2x2"));
}

#[test]
fn non_projector_boundary_condition_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "p.json", r#"{"m":1,"T1":[[[0.5,0]]],"T2":[[[1,0]]]}"#);
    let out = slq(&["forward", "--config", s(&cfg), "--nmax", "2", "--out", s(&dir.path().join("d.json"))]);
    assert_eq!(out.status.code(), Some(1));
}
