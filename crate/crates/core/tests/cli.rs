//! The `lemmata` binary on the hex2bin fixture.

mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::*;

fn lemmata(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lemmata")).args(args).env_remove("RUST_LOG").output().unwrap()
}

fn mock_args() -> Vec<String> {
    let dir = hex2bin_dir();
    vec![
        "--prover".into(),
        "mock".into(),
        "--mock-script".into(),
        dir.join("mock-script.json").display().to_string(),
        "--cassette".into(),
        dir.join("cassette.json").display().to_string(),
    ]
}

fn with_mock(rest: &[&str]) -> Output {
    let mut args = mock_args();
    args.extend(rest.iter().map(|s| s.to_string()));
    lemmata(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn prove_then_certify() {
    let out = tempfile::tempdir().unwrap();
    let manifest = hex2bin_dir().join("manifest.json");
    let o = with_mock(&["prove", "--task", path(&manifest), "--out", path(out.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "hex2bin: proved");

    let usage: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.path().join("hex2bin.usage.json")).unwrap()).unwrap();
    let used: Vec<&str> = usage["lemmas"]["used"].as_array().unwrap().iter().map(|u| u["name"].as_str().unwrap()).collect();
    assert_eq!(used, HEX2BIN_LEMMAS);
    assert_eq!(usage["consumed_steps"], 6);
    let transcript = fs::read_to_string(out.path().join("hex2bin.transcript.jsonl")).unwrap();
    assert!(transcript.lines().all(|l| serde_json::from_str::<serde_json::Value>(l).is_ok()));

    let artifact = out.path().join("hex2bin.v");
    let goal = hex2bin_dir().join("hex2bin_goal.v");
    let o = with_mock(&["certify", path(&artifact), "--goal", path(&goal)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["accepted"], true);
    assert_eq!(report["admitted_count"], 0);
}

#[test]
fn offline_bundle_feeds_prove() {
    let out = tempfile::tempdir().unwrap();
    let manifest = hex2bin_dir().join("manifest.json");
    let bundle = out.path().join("bundle.json");
    let o = with_mock(&["synthesize-offline", "--task", path(&manifest), "--out", path(&bundle)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "hex2bin: 2 of 2 lemma(s) checked");
    let o = with_mock(&["prove", "--task", path(&manifest), "--bundle", path(&bundle), "--out", path(out.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn unproved_task_exits_one() {
    let out = tempfile::tempdir().unwrap();
    let manifest = hex2bin_dir().join("manifest.json");
    let o = with_mock(&["prove", "--task", path(&manifest), "--budget-steps", "2", "--out", path(out.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "hex2bin: exhausted-steps");
    assert!(!out.path().join("hex2bin.v").exists());
}

#[test]
fn admitted_file_fails_certification() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.v");
    fs::write(&file, read_fixture("hex2bin_goal.v")).unwrap();
    let o = with_mock(&["certify", path(&file)]);
    assert_eq!(o.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["accepted"], false);
    assert!(report["first_error"].is_array());
}

#[test]
fn bench_writes_reports() {
    let suite = tempfile::tempdir().unwrap();
    let task_dir = suite.path().join("hex2bin");
    fs::create_dir_all(&task_dir).unwrap();
    for f in ["hex2bin.c", "hex2bin_goal.v", "manifest.json", "cassette.json", "mock-script.json"] {
        fs::copy(hex2bin_dir().join(f), task_dir.join(f)).unwrap();
    }
    let out = tempfile::tempdir().unwrap();
    let o = lemmata(&["bench", "--suite", path(suite.path()), "--report", path(out.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["totals"]["proved"], 1);
    assert!(out.path().join("report.txt").is_file());
    assert!(out.path().join("metadata.json").is_file());
}

#[test]
fn usage_errors() {
    let manifest = hex2bin_dir().join("manifest.json");
    let o = lemmata(&["--prover", "mock", "prove", "--task", path(&manifest)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--cassette or --llm-config"));
    let o = lemmata(&["--cassette", "a.json", "--llm-config", "b.json", "prove", "--task", path(&manifest)]);
    assert_eq!(o.status.code(), Some(2));
}
