use std::path::Path;
use std::process::{Command, Output};

use stqa::config::RunConfig;

const TOY: &[&str] = &[
    "--set", "word_dim=4", "--set", "ctx_dim=4", "--set", "hidden=4", "--set", "attn_hidden=3", "--set", "answer_dim=4",
    "--set", "context_layers=1", "--set", "question_layers=2", "--set", "num_hash_buckets=4", "--set", "epochs=2",
];

fn stqa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stqa")).args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

/// Error code from the last stderr line.
fn error_code(out: &Output) -> String {
    let err = String::from_utf8_lossy(&out.stderr);
    let line = err.lines().last().unwrap_or_default();
    let v: serde_json::Value = serde_json::from_str(line).unwrap_or_else(|e| panic!("{e}: {err}"));
    v["error"].as_str().unwrap().to_string()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn errors_are_json_with_exit_codes() {
    let out = stqa(&["train", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_code(&out), "usage");

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.ckpt");
    let data = dir.path().join("d.jsonl");
    let out = stqa(&["predict", "--checkpoint", p(&missing), "--data", p(&data), "--out", p(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_code(&out), "io");

    let out = stqa(&["synth", "--out", p(&data), "--set", "no_such_key=1"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_code(&out), "config");
    assert!(!data.exists());
}

#[test]
fn synth_train_predict_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("synth.jsonl");
    let ckpt = dir.path().join("m.ckpt");
    let out = stqa(&["synth", "--out", p(&data), "--num-samples", "24", "--vocab-size", "20", "--seed", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_json(&out)["samples"], 24);

    let mut args = vec!["train", "--data", p(&data), "--out", p(&ckpt)];
    args.extend_from_slice(TOY);
    let out = stqa(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // The hash printed by another process matches the in-process one.
    let mut cfg = RunConfig::default();
    for kv in TOY.iter().filter(|a| a.contains('=')) {
        let (k, v) = kv.split_once('=').unwrap();
        cfg.set(k, v).unwrap();
    }
    assert_eq!(stdout_json(&out)["config_hash"], cfg.model_hash());

    let preds: Vec<_> = (0..2).map(|i| dir.path().join(format!("p{i}.jsonl"))).collect();
    for pr in &preds {
        let out = stqa(&["predict", "--checkpoint", p(&ckpt), "--data", p(&data), "--out", p(pr)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let first = std::fs::read(&preds[0]).unwrap();
    assert_eq!(first, std::fs::read(&preds[1]).unwrap());
    assert_eq!(first.iter().filter(|&&b| b == b'\n').count(), 24);

    let out = stqa(&["eval", "--data", p(&data), "--predictions", p(&preds[0])]);
    assert!(out.status.success());
    let report = stdout_json(&out);
    assert_eq!(report["num_samples"], 24);
    assert!((0.0..=1.0).contains(&report["anls"].as_f64().unwrap()));

    let mismatched = dir.path().join("mismatch.jsonl");
    let out = stqa(&["predict", "--checkpoint", p(&ckpt), "--data", p(&data), "--out", p(&mismatched), "--topk", "3"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_code(&out), "config_mismatch");
    let out = stqa(&["predict", "--checkpoint", p(&ckpt), "--data", p(&data), "--out", p(&mismatched), "--topk", "3", "--force"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn gradcheck_subcommand_passes() {
    let out = stqa(&["gradcheck", "--seeds", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_json(&out)[0]["passed"], true);
}
