//! End-to-end checks of the `contaski` binary: run, experiment and trace
//! subcommands, exit codes and output files.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_contaski"))
}

fn preset(name: &str) -> String {
    format!("{}/presets/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn run_writes_trace_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let status = bin()
        .args(["run", "--config", &preset("fig3.json"), "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    for file in ["trace.jsonl", "metrics.json", "metrics.csv"] {
        assert!(out.join(file).is_file(), "{file} missing");
    }
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["metrics"]["nat"], 1);
    assert_eq!(metrics["metrics"]["per_dispatch"][0]["cpt"], 2);
}

#[test]
fn run_rejects_invalid_config_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"seed": 1, "radio": {"range_m": -5.0}}"#).unwrap();
    let output = bin()
        .args(["run", "--config"])
        .arg(&bad)
        .args(["--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&output.stderr).is_empty());
}

#[test]
fn seed_flag_overrides_scenario_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (
        dir.path().join("a"),
        dir.path().join("b"),
        dir.path().join("c"),
    );
    for (out, seed) in [(&a, "7"), (&b, "7"), (&c, "8")] {
        let status = bin()
            .args(["run", "--config", &preset("fig3.json"), "--seed", seed, "--out"])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let read = |p: &Path| std::fs::read_to_string(p.join("trace.jsonl")).unwrap();
    assert_eq!(read(&a), read(&b), "same seed must be byte-identical");
    assert_ne!(read(&a), read(&c), "different seed must differ");
}

#[test]
fn experiment_writes_summary_with_full_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.json");
    // A miniature sweep: 2 points x 3 replications.
    let base: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(preset("paper.plan")).unwrap()).unwrap();
    let mini = serde_json::json!({
        "base": base["base"],
        "sweep": { "nodes": [10, 20] },
        "replications": 3,
        "master_seed": 11
    });
    std::fs::write(&plan, mini.to_string()).unwrap();
    let out = dir.path().join("out");
    let status = bin()
        .args(["experiment", "--plan"])
        .arg(&plan)
        .args(["--jobs", "2", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    // Header plus points x replications rows, exactly.
    assert_eq!(summary.lines().count(), 1 + 2 * 3);
    assert!(out.join("aggregates.json").is_file());
}

#[test]
fn trace_filters_and_audit() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert!(bin()
        .args(["run", "--config", &preset("fig3.json"), "--out"])
        .arg(&out)
        .status()
        .unwrap()
        .success());
    let trace = out.join("trace.jsonl");

    let accepts = bin()
        .args(["trace"])
        .arg(&trace)
        .args(["--kind", "task_accept"])
        .output()
        .unwrap();
    assert!(accepts.status.success());
    assert_eq!(String::from_utf8_lossy(&accepts.stdout).lines().count(), 2);

    let audit = bin().args(["trace"]).arg(&trace).arg("--audit").output().unwrap();
    assert!(audit.status.success(), "audit must report zero violations");

    // A corrupt line is reported with its line number and exits non-zero.
    let corrupt = dir.path().join("corrupt.jsonl");
    std::fs::write(&corrupt, "{not json\n").unwrap();
    let bad = bin().args(["trace"]).arg(&corrupt).output().unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains('1'.to_string().as_str()));
}
