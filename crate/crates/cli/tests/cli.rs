// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn logsieve(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_logsieve"))
        .args(args)
        .output()
        .expect("spawn logsieve")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = logsieve(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).expect("json")
}

#[test]
fn generate_train_evaluate_classify() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.jsonl");
    let test = dir.path().join("test.jsonl");
    let bundle = dir.path().join("bundle");
    ok(&["gen", "--seed", "5", "--records", "3000", "--split", "0.8", "--out", p(&train), "--test-out", p(&test)]);
    assert_eq!(fs::read_to_string(&train).unwrap().lines().count(), 2400);
    assert_eq!(fs::read_to_string(&test).unwrap().lines().count(), 600);

    ok(&[
        "train", "--seed", "5", "--input", p(&train), "--keep", "0.4", "--k", "10", "--sweeps", "40",
        "--hidden", "16,16", "--epochs", "30", "--out", p(&bundle),
    ]);
    for f in ["manifest.json", "lm.nglm", "lda.ldam", "mlp.mlpc"] {
        assert!(bundle.join(f).is_file(), "{f} missing");
    }

    let report = dir.path().join("eval.json");
    ok(&["eval", "--bundle", p(&bundle), "--input", p(&test), "--report", p(&report)]);
    let eval = json(&fs::read(&report).unwrap());
    assert_eq!(eval["total"], 600);
    let f1 = eval["full"]["macro_f1"].as_f64().unwrap();
    // A small model; this only checks the plumbing produces a working classifier.
    assert!(f1 > 0.6, "macro F1 {f1}");

    let lines = dir.path().join("lines.txt");
    fs::write(&lines, "2017-03-04 10:00:00,001 ERROR [dao] java.sql.SQLException: Connection refused\n### ::: ###\n").unwrap();
    let out = ok(&["classify", "--bundle", p(&bundle), "--input", p(&lines)]);
    let rows: Vec<serde_json::Value> = String::from_utf8(out.stdout).unwrap().lines().map(|l| json(l.as_bytes())).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1]["filtered"], true);
    assert!(rows[1]["log2_ppx"].is_null());
}

#[test]
fn staged_training_and_filter_report() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.jsonl");
    let lm = dir.path().join("lm.nglm");
    ok(&["gen", "--seed", "9", "--records", "2000", "--out", p(&corpus)]);
    ok(&["train-lm", "--input", p(&corpus), "--format", "jsonl", "--out", p(&lm)]);

    let out = ok(&["calibrate", "--model", p(&lm), "--keep", "0.5", "--input", p(&corpus), "--format", "jsonl"]);
    let cal = json(&out.stdout);
    let threshold = cal["threshold"].as_f64().unwrap();

    let kept = dir.path().join("kept.jsonl");
    let rejects = dir.path().join("rejects.jsonl");
    let report = dir.path().join("report.json");
    let t = threshold.to_string();
    ok(&[
        "filter", "--model", p(&lm), "--threshold", &t, "--input", p(&corpus), "--format", "jsonl",
        "--output", p(&kept), "--rejects", p(&rejects), "--report", p(&report),
    ]);
    let r = json(&fs::read(&report).unwrap());
    let n_kept = fs::read_to_string(&kept).unwrap().lines().count() as u64;
    let n_rej = fs::read_to_string(&rejects).unwrap().lines().count() as u64;
    assert_eq!(r["kept"].as_u64().unwrap(), n_kept);
    assert_eq!(r["filtered"].as_u64().unwrap(), n_rej);
    assert_eq!(n_kept + n_rej, 2000);
    assert!((n_kept as f64 / 2000.0 - 0.5).abs() < 0.05, "kept {n_kept}");

    let lda = dir.path().join("lda.ldam");
    let bundle = dir.path().join("bundle");
    ok(&["train-lda", "--input", p(&kept), "--format", "jsonl", "--k", "8", "--sweeps", "30", "--out", p(&lda)]);
    ok(&[
        "train-clf", "--input", p(&corpus), "--lm", p(&lm), "--lda", p(&lda), "--threshold", &t,
        "--hidden", "8", "--epochs", "10", "--out", p(&bundle),
    ]);
    let manifest = json(&fs::read(bundle.join("manifest.json")).unwrap());
    assert_eq!(manifest["threshold"].as_f64().unwrap(), threshold);
    assert_eq!(manifest["topics"], 8);

    let out = ok(&["score", "--model", p(&lm), "--input", p(&kept), "--format", "jsonl"]);
    let text = String::from_utf8(out.stdout).unwrap();
    for line in text.lines() {
        let score: f64 = line.split('\t').nth(1).unwrap().parse().unwrap();
        // Scores are printed to six decimals.
        assert!(score >= threshold - 1e-6, "{score} < {threshold}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.nglm");
    assert_eq!(logsieve(&["score", "--bogus"]).status.code(), Some(2));
    assert_eq!(logsieve(&["gen", "--records", "0"]).status.code(), Some(2));
    assert_eq!(logsieve(&["calibrate", "--model", p(&missing), "--keep", "1.5"]).status.code(), Some(2));
    assert_eq!(logsieve(&["score", "--model", p(&missing)]).status.code(), Some(1));

    let garbage = dir.path().join("garbage.nglm");
    fs::write(&garbage, b"not a model").unwrap();
    let out = logsieve(&["score", "--model", p(&garbage)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());

    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "seed = 1\nunknown_key = 2\n").unwrap();
    assert_eq!(logsieve(&["--config", p(&cfg), "gen", "--records", "1"]).status.code(), Some(2));
}

#[test]
fn config_file_sets_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "seed = 77\n").unwrap();
    let a = ok(&["--config", p(&cfg), "gen", "--records", "50"]).stdout;
    let b = ok(&["gen", "--seed", "77", "--records", "50"]).stdout;
    let c = ok(&["gen", "--seed", "78", "--records", "50"]).stdout;
    assert_eq!(a, b);
    assert_ne!(a, c);
}
