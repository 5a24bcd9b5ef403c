mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::data_path;
use serde_json::Value;

fn nvmlens(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nvmlens"))
        .args(args)
        .env_remove("NVMLENS_CONFIG")
        .output()
        .expect("spawn nvmlens")
}

fn ok_json(out: Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is a JSON report")
}

fn s(p: &Path) -> String {
    p.display().to_string()
}

#[test]
fn exit_codes() {
    assert_eq!(nvmlens(&[]).status.code(), Some(2));
    assert_eq!(nvmlens(&["nope"]).status.code(), Some(2));
    assert_eq!(nvmlens(&["--help"]).status.code(), Some(0));
    let out = nvmlens(&["analyze", "--trace", "/definitely/missing"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    // Inverted tier thresholds are a validation error, not a usage error.
    let table = s(&data_path("table2.csv"));
    let out = nvmlens(&["classify", "--metrics", &table, "--tier-low", "9", "--tier-high", "2"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn flag_beats_env_beats_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("nvmlens.toml");
    std::fs::write(&cfg, "[thresholds]\ntier_low = 1.2\nwrite_thresh = 2500.0\n").unwrap();
    let table = s(&data_path("table2.csv"));

    let base = ok_json(nvmlens(&["classify", "--metrics", &table, "--deterministic"]));
    assert_eq!(base["thresholds"]["tier_low"], 1.5);
    assert!(base["manifest"].get("generated_unix_s").is_none());

    let env = Command::new(env!("CARGO_BIN_EXE_nvmlens"))
        .args(["classify", "--metrics", &table, "--deterministic"])
        .env("NVMLENS_CONFIG", &cfg)
        .output()
        .unwrap();
    let env = ok_json(env);
    assert_eq!(env["thresholds"]["tier_low"], 1.2);
    assert_eq!(env["thresholds"]["write_thresh"], 2500.0);

    let flag = Command::new(env!("CARGO_BIN_EXE_nvmlens"))
        .args(["classify", "--metrics", &table, "--config", &s(&cfg), "--tier-low", "1.4", "--deterministic"])
        .env("NVMLENS_CONFIG", "/missing/ignored.toml")
        .output()
        .unwrap();
    let flag = ok_json(flag);
    assert_eq!(flag["thresholds"]["tier_low"], 1.4);
    assert_eq!(flag["thresholds"]["write_thresh"], 2500.0);
    assert_eq!(flag["manifest"]["overrides"][0], "tier_low=1.4");
}

#[test]
fn report_envelope_and_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(dir.path());
    let table = s(&data_path("cache.csv"));
    let v = ok_json(nvmlens(&["cache-metrics", "--table", &table, "--out", &out, "--deterministic"]));
    for key in ["tool", "version", "report", "manifest", "thresholds", "body"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    let written: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("cache-metrics.json")).unwrap()).unwrap();
    assert_eq!(written, v);
}

#[test]
fn simulate_analyze_plot() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(dir.path());
    let spec = s(&data_path("workloads/laghos.toml"));
    ok_json(nvmlens(&["simulate", "--workload", &spec, "--stem", "lg", "--out", &out, "--deterministic"]));
    for f in ["lg.mem.csv", "lg.core.csv", "lg.meta", "lg.truth.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let stem = s(&dir.path().join("lg"));
    let analysis = ok_json(nvmlens(&["analyze", "--trace", &stem, "--out", &out, "--deterministic"]));
    assert!(!analysis["body"]["phases"].as_array().unwrap().is_empty());
    assert!(dir.path().join("lg.bandwidth.csv").exists());

    let report = s(&dir.path().join("analyze.json"));
    let plot = nvmlens(&["plot-data", "--report", &report]);
    assert!(plot.status.success());
    let text = String::from_utf8(plot.stdout).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.contains("read_mbps") && header.contains("write_mbps"), "{header}");
    let n = analysis["body"]["series"]["read_mbps"].as_array().unwrap().len();
    assert_eq!(text.lines().count(), n + 1);

    let bad = nvmlens(&["plot-data", "--report", &report, "--series", "/body/nothing"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn predictor_train_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(dir.path());
    let spec = s(&data_path("workloads/superlu.toml"));
    for (seed, stem) in [("1", "a"), ("2", "b")] {
        ok_json(nvmlens(&["simulate", "--workload", &spec, "--seed", seed, "--stem", stem, "--out", &out, "--deterministic"]));
    }
    let a = s(&dir.path().join("a"));
    let b = s(&dir.path().join("b"));
    let trained = ok_json(nvmlens(&["predict-train", "--trace", &a, "--out", &out, "--deterministic"]));
    assert!(trained["body"].is_object());
    let model = dir.path().join("model.json");
    assert!(model.exists());
    let eval = ok_json(nvmlens(&["predict-eval", "--model", &s(&model), "--trace", &b, "--deterministic"]));
    let acc = eval["body"]["mean_accuracy"].as_f64().unwrap();
    assert!(acc > 0.5 && acc <= 1.0, "{acc}");
}

#[test]
fn place_from_profile() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(dir.path());
    let spec = s(&data_path("workloads/scalapack.toml"));
    ok_json(nvmlens(&["simulate", "--workload", &spec, "--stem", "sc", "--out", &out, "--deterministic"]));
    let profile = s(&dir.path().join("sc.objects.csv"));
    let v = ok_json(nvmlens(&["place", "--profile", &profile, "--budget", "0", "--deterministic"]));
    for plan in v["body"]["plans"].as_array().unwrap() {
        assert_eq!(plan["in_dram"].as_array().unwrap().len(), 0);
    }
    let neg = nvmlens(&["place", "--profile", &profile, "--budget", "-5"]);
    assert_eq!(neg.status.code(), Some(1));
}
