mod common;

use std::path::Path;
use std::process::{Command, Output};

fn bcm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bcm")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn quick_config(dir: &Path) -> String {
    let config = common::quick_pipeline(dir, 12);
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path.display().to_string()
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(bcm(&[]).status.code(), Some(2));
    assert_eq!(bcm(&["evaluate"]).status.code(), Some(2), "--seed is required");
    assert_eq!(bcm(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(bcm(&["ablate", "--seed", "1", "--k", "x"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = bcm(&[
        "evaluate",
        "--seed",
        "1",
        "--corpus",
        "/nonexistent/corpus.jsonl",
        "--out-dir",
        &dir.path().display().to_string(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn gen_data_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = bcm(&["gen-data", "--out-dir", &dir.path().display().to_string(), "--seed", "7"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(v["num_pairs"], 63 * 35);
    assert!(v["positives"].as_u64().unwrap() > 0);
    assert!(dir.path().join("corpus.jsonl").exists());
}

#[test]
fn evaluate_then_score_a_pair() {
    let dir = tempfile::tempdir().unwrap();
    let config = quick_config(dir.path());
    let run = dir.path().join("run");

    let out = bcm(&["evaluate", "--config", &config, "--seed", "12"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["seed"], 12);

    let out = bcm(&[
        "score",
        "--matcher",
        &run.join("matcher.ckpt").display().to_string(),
        "--summarizer",
        &run.join("summarizer.ckpt").display().to_string(),
        "--corpus",
        &dir.path().join("data/corpus.jsonl").display().to_string(),
        "--celebrity",
        "celebrity000",
        "--brand",
        "brand001",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let line = stdout(&out);
    assert_eq!(line.lines().count(), 1);
    let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    assert_eq!(v["celebrity_id"], "celebrity000");
    assert_eq!(v["brand_id"], "brand001");
    let p = v["probability"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    assert_eq!(v["prediction"], u8::from(p >= 0.5));

    let out = bcm(&[
        "score",
        "--matcher",
        &run.join("matcher.ckpt").display().to_string(),
        "--summarizer",
        &run.join("summarizer.ckpt").display().to_string(),
        "--corpus",
        &dir.path().join("data/corpus.jsonl").display().to_string(),
        "--celebrity",
        "nobody",
        "--brand",
        "brand001",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn ablate_prints_one_row_per_k() {
    let dir = tempfile::tempdir().unwrap();
    let config = quick_config(dir.path());
    let out = bcm(&["ablate", "--config", &config, "--seed", "12", "--k", "1,2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# k precision recall f1 accuracy");
    assert_eq!(lines.len(), 3);
    for (line, k) in lines[1..].iter().zip(["1", "2"]) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(fields.len(), 5);
        assert_eq!(fields[0], k);
    }
}
