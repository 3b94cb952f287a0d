use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sffkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sffkit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = sffkit(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synth(dir: &Path) -> String {
    let corpus = dir.join("corpus");
    ok(&[
        "synth",
        "--out",
        corpus.to_str().unwrap(),
        "--speakers-per-class",
        "3",
        "--utterances-per-speaker",
        "2",
        "--duration-s",
        "0.3",
    ]);
    corpus.join("manifest.csv").to_str().unwrap().to_string()
}

#[test]
fn extract_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    let feats = dir.path().join("feats");
    let printed = ok(&[
        "extract",
        "--manifest",
        &manifest,
        "--features",
        "mfcc-sff",
        "--task",
        "all",
        "--out",
        feats.to_str().unwrap(),
    ]);
    let csv = feats.join("features_mfcc_sff.csv");
    assert_eq!(printed.trim(), csv.to_str().unwrap());
    assert!(feats.join("features_mfcc_sff.json").exists());

    let out = dir.path().join("eval");
    let table = ok(&[
        "evaluate",
        "--features-file",
        csv.to_str().unwrap(),
        "--grid",
        "1e-2..1e2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(table.contains("| MFCC-SFF"));
    for f in ["report.json", "table.txt", "confusion.csv", "model.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["summary"]["n_folds"], 9);
    assert_eq!(report["config"]["c_grid"].as_array().unwrap().len(), 5);
}

#[test]
fn compare_writes_both_tables() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    let out = dir.path().join("cmp");
    let text = ok(&[
        "compare",
        "--manifest",
        &manifest,
        "--kinds",
        "mfcc,sffcc",
        "--task",
        "vowel",
        "--grid",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(text.starts_with("Task: vowel"));
    assert!(text.contains("F1 score-2"));
    assert!(text.contains("Relative (%)"));
    assert!(out.join("comparison.json").exists());
    assert!(out.join("sffcc").join("report.json").exists());
}

#[test]
fn spectrogram_both_methods() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let wav = dir.path().join("corpus").join("healthy00_u0.wav");
    for (method, bins) in [("stft", 257), ("sff", 256)] {
        let out = dir.path().join(format!("{method}.csv"));
        ok(&["spectrogram", "--wav", wav.to_str().unwrap(), "--method", method, "--out", out.to_str().unwrap()]);
        let text = fs::read_to_string(&out).unwrap();
        let first = text.lines().next().unwrap();
        assert_eq!(first.split(',').count(), bins, "{method}");
        let meta: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.with_extension("json")).unwrap()).unwrap();
        assert_eq!(meta["origin"], method);
    }
}

#[test]
fn errors_exit_non_zero() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = sffkit(&["extract", "--manifest", missing.to_str().unwrap(), "--features", "sffcc", "--out", "x"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.csv"));
    let out = sffkit(&["extract", "--manifest", "m.csv", "--features", "lpcc", "--out", "x"]);
    assert!(!out.status.success());
    let out = sffkit(&["evaluate", "--features-file", "f.csv", "--grid", "3..30", "--out", "x"]);
    assert!(!out.status.success());
}
