mod common;

use std::fs;
use std::path::Path;

use ratt_core::evalstats::{JudgmentRecord, Preference};
use serde_json::Value;

const TINY: &str = r#"{"d_word": 6, "d_pos": 2, "d_senti": 2, "d_position": 3, "hidden": 6, "d_attn": 6,
"learning_rate": 0.1, "max_epochs": 2}"#;

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// gen-synthetic, train, eval, audit and sweep into `out`.
fn pipeline(root: &Path, out: &str) {
    let cfg = root.join("cfg.json");
    fs::write(&cfg, TINY).unwrap();
    let data = root.join(out).join("data");
    let model = root.join(out).join("model");
    let sweep = root.join(out).join("sweep");
    common::ok(&["gen-synthetic", "--instances", "120", "--seed", "4", "--out-dir", p(&data)]);
    let corpus = data.join("corpus.jsonl");
    let folds = data.join("folds.json");
    common::ok(&[
        "train", "--corpus", p(&corpus), "--folds", p(&folds), "--config", p(&cfg),
        "--mode", "attn-trained", "--gamma", "0.5", "--seed", "2", "--out-dir", p(&model),
    ]);
    let ckpt = model.join("model.json");
    common::ok(&["eval", "--checkpoint", p(&ckpt), "--corpus", p(&corpus), "--out-dir", p(&model)]);
    common::ok(&["audit", "--checkpoint", p(&ckpt), "--corpus", p(&corpus), "--out-dir", p(&model)]);
    common::ok(&[
        "sweep", "--corpus", p(&corpus), "--folds", p(&folds), "--config", p(&cfg),
        "--gammas", "0,0.5", "--seeds", "1,2", "--out-dir", p(&sweep),
    ]);
}

#[test]
fn pipeline_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path(), "one");
    pipeline(dir.path(), "two");
    let files = [
        "data/corpus.jsonl",
        "data/folds.json",
        "model/model.json",
        "model/train_report.json",
        "model/eval.json",
        "model/audit.jsonl",
        "model/audit_summary.json",
        "sweep/sweep.csv",
        "sweep/sweep.json",
    ];
    for f in files {
        let a = fs::read(dir.path().join("one").join(f)).unwrap();
        let b = fs::read(dir.path().join("two").join(f)).unwrap();
        assert!(!a.is_empty(), "{f} is empty");
        assert!(a == b, "{f} differs between identical runs");
    }
    let csv = fs::read_to_string(dir.path().join("one/sweep/sweep.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("gamma,seed,metric,attn_loss"));
    assert_eq!(csv.lines().count(), 5);

    let audit = fs::read_to_string(dir.path().join("one/model/audit.jsonl")).unwrap();
    let first: Value = serde_json::from_str(audit.lines().next().unwrap()).unwrap();
    let attn: Vec<f64> = serde_json::from_value(first["attention"].clone()).unwrap();
    assert!((attn.iter().sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    assert_eq!(common::ratt(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(common::ratt(&["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(common::ratt(&["--help"]).status.code(), Some(0));

    let missing = common::ratt(&["eval", "--checkpoint", "nope.json", "--corpus", "nope.jsonl"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope"));

    let data = root.join("data");
    common::ok(&["gen-synthetic", "--instances", "60", "--out-dir", p(&data)]);
    let corpus = data.join("corpus.jsonl");
    let folds = data.join("folds.json");

    let bad = root.join("bad.jsonl");
    let mut text = fs::read_to_string(&corpus).unwrap();
    text.push_str("{\"broken\": true}\n");
    fs::write(&bad, text).unwrap();
    let out = common::ratt(&["train", "--corpus", p(&bad), "--dev", p(&bad), "--out-dir", p(&root.join("x"))]);
    assert_eq!(out.status.code(), Some(2));

    let out = common::ratt(&[
        "train", "--corpus", p(&corpus), "--folds", p(&folds), "--gamma", "2",
        "--mode", "attn-trained", "--out-dir", p(&root.join("y")),
    ]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));

    let cfg = root.join("cfg.json");
    fs::write(&cfg, TINY).unwrap();
    let out = common::ratt(&[
        "train", "--corpus", p(&corpus), "--folds", p(&folds), "--config", p(&cfg),
        "--learning-rate", "1e308", "--out-dir", p(&root.join("z")),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn ingest_expands_and_undersamples() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("sentences.jsonl");
    let mut lines = Vec::new();
    for d in 0..10 {
        // Four entities: 12 ordered pairs, one of them a relation.
        lines.push(format!(
            r#"{{"doc_id":"d{d}","tokens":["a","likes","b","and","c","d"],"entities":[[0,1],[2,3],[4,5],[5,6]],"relations":[{{"source":0,"target":1,"label":"positive","rationale":[1,2]}}]}}"#
        ));
    }
    fs::write(&input, lines.join("\n")).unwrap();

    let all = dir.path().join("all");
    let out = common::ok(&["ingest", "--input", p(&input), "--no-undersample", "--out-dir", p(&all)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("wrote 120 instances (110 no-relation)"));

    let some = dir.path().join("some");
    let out = common::ok(&["ingest", "--input", p(&input), "--undersample", "2", "--out-dir", p(&some)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("wrote 30 instances (20 no-relation)"));

    let none = dir.path().join("none");
    let out = common::ok(&["ingest", "--input", p(&input), "--exclude-null", "--out-dir", p(&none)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("wrote 10 instances (0 no-relation)"));

    let corpus = fs::read_to_string(some.join("corpus.jsonl")).unwrap();
    assert_eq!(corpus.lines().filter(|l| l.starts_with('{')).count(), 30);

    fs::write(&input, "{\"doc_id\":\"d\",\"tokens\":[\"a\"],\"entities\":[[0,4]]}\n").unwrap();
    let out = common::ratt(&["ingest", "--input", p(&input), "--out-dir", p(&all)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sentences.jsonl:1:"));
}

#[test]
fn judge_report_sign_test() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("judgments.jsonl");
    let lines: Vec<String> = (0..10)
        .map(|k| {
            serde_json::to_string(&JudgmentRecord {
                instance_id: k,
                system_a_sensible: true,
                system_b_sensible: true,
                preferred: Some(Preference::A),
                strength: None,
                annotator: "t".into(),
                timestamp: 0,
            })
            .unwrap()
        })
        .collect();
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let out = common::ok(&["judge-report", "--judgments", p(&path), "--out-dir", p(dir.path())]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("10 judgments"));
    let report: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("judge_report.json")).unwrap()).unwrap();
    assert_eq!(report["p_value"].as_f64(), Some(0.001953125));
}
