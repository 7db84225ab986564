//! End-to-end checks of the command-line interface.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_epdta"))
}

fn model_path(name: &str) -> String {
    format!("{}/models/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn epdta")
}

#[test]
fn validate_good_model_exits_zero() {
    let out = run(&["validate", "--model", &model_path("fig1.epdta")]);
    assert!(out.status.success(), "{out:?}");
}

#[test]
fn validate_bad_model_exits_one_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.epdta");
    std::fs::write(
        &path,
        "clocks x\nlocation l0 invariant x >= 3\ninit l0\nmax_time 2\n",
    )
    .unwrap();
    let out = bin()
        .args(["validate", "--model"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("past-closed"), "stderr: {stderr}");
}

#[test]
fn missing_required_flag_exits_one() {
    let out = run(&["reach", "--model", &model_path("chain03.epdta")]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn reach_prints_twelve_significant_digits() {
    let out = run(&[
        "reach",
        "--model",
        &model_path("chain03.epdta"),
        "--target",
        "dead",
        "--horizon",
        "2",
    ]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "0.510000000000");
}

#[test]
fn enumerate_dumps_states_and_transitions() {
    let out = run(&["enumerate", "--model", &model_path("single.epdta")]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("states 5\n"), "{text}");
    assert!(text.contains("transitions"));
    assert!(text.contains("3 stop -> 4:1"));
}

#[test]
fn state_cap_exceeded_exits_two() {
    let out = bin()
        .args([
            "enumerate",
            "--model",
            &model_path("fig1.epdta"),
            "--state-cap",
            "2",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn export_prism_writes_model_file() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("fig1.nm");
    let out = bin()
        .args(["export-prism", "--model", &model_path("fig1.epdta"), "--out"])
        .arg(&out_path)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = std::fs::read_to_string(&out_path).unwrap();
    assert!(text.contains("mdp"));
    assert!(text.contains("0.7 :"));
}

#[test]
fn simulate_writes_csv_jsonl_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("run.csv");
    let jsonl_path = dir.path().join("run.jsonl");
    let out = bin()
        .args([
            "simulate",
            "--species",
            &model_path("sole.cfg"),
            "--f",
            "1.2",
            "--months",
            "72",
            "--seed",
            "7",
        ])
        .arg("--out")
        .arg(&csv_path)
        .arg("--jsonl")
        .arg(&jsonl_path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");

    let csv = std::fs::read_to_string(&csv_path).unwrap();
    // header plus the month-0 census plus 72 monthly rows
    assert_eq!(csv.lines().count(), 74);
    assert!(csv.starts_with("month,pop_0"));

    let jsonl = std::fs::read_to_string(&jsonl_path).unwrap();
    assert_eq!(jsonl.lines().count(), 73);

    let manifest_path = PathBuf::from(format!("{}.manifest.json", csv_path.display()));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(manifest_path).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["months"], 72);
    assert_eq!(manifest["fishing_index"], 1.2);
    assert!(manifest["species_config_sha256"]
        .as_str()
        .unwrap()
        .len()
        .eq(&64));

    // no stray temp file from the write-then-rename step
    assert!(!dir.path().join("run.tmp").exists());
}

#[test]
fn simulate_is_reproducible_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for name in ["x.csv", "y.csv"] {
        let path = dir.path().join(name);
        let out = bin()
            .args([
                "simulate",
                "--species",
                &model_path("sole.cfg"),
                "--months",
                "12",
                "--seed",
                "3",
            ])
            .arg("--out")
            .arg(&path)
            .output()
            .unwrap();
        assert!(out.status.success());
        outputs.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}
