use std::path::Path;
use std::process::{Command, Output};

fn bheisr(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bheisr"))
        .args(args)
        .current_dir(dir)
        .env("RUST_BACKTRACE", "0")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> Output {
    let out = bheisr(args, dir);
    assert!(
        out.status.success(),
        "bheisr {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn ingest_then_simulate_from_json() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["ingest", "--synth", "mind:3", "--out", "corpus.json"], dir.path());
    ok(
        &["simulate", "--dataset", "corpus.json", "--feeds", "2", "--out", "run"],
        dir.path(),
    );
    for name in ["run.jsonl", "feeds.jsonl", "beliefs.jsonl"] {
        let text = std::fs::read_to_string(dir.path().join("run").join(name)).unwrap();
        assert!(!text.is_empty(), "{name} is empty");
        for line in text.lines() {
            serde_json::from_str::<serde_json::Value>(line).unwrap();
        }
    }
}

#[test]
fn experiment_one_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        ok(&["experiment", "1", "--synth", "mind:5", "--out", out], dir.path());
    }
    let read = |o: &str| std::fs::read(dir.path().join(o).join("experiment1_coverage.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
    let csv = String::from_utf8(read("a")).unwrap();
    assert!(csv.starts_with("feed,RD,"));
    assert!(csv.lines().any(|l| l.starts_with("Improv")));
}

#[test]
fn detect_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["detect", "--synth", "mind:1", "--out", "det"], dir.path());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("det/detection.json")).unwrap()).unwrap();
    assert_eq!(report["model"], "cb");
    assert!(report["audited_user"].is_string());
    assert!(dir.path().join("det/belief_histogram.csv").exists());
}

#[test]
fn graph_prints_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["graph", "--synth", "mind:1"], dir.path());
    let export: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(export.is_object());
}

#[test]
fn invalid_input_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["experiment", "9", "--synth", "mind"][..],
        &["simulate", "--synth", "mind", "--w", "1.5"],
        &["detect", "--synth", "mind", "--model", "cb_w"],
        &["ingest", "--dataset", "missing.tsv"],
    ] {
        let out = bheisr(args, dir.path());
        assert!(!out.status.success(), "{args:?} should fail");
        assert!(String::from_utf8_lossy(&out.stderr).contains("Error"));
    }
}
