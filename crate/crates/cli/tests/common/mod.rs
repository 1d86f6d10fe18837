#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

use ratt_core::corpus::Span;
use ratt_core::interpret::{write_audit, AttentionAuditRecord, InfluenceProfile, RankMetrics};

pub fn ratt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ratt"))
        .args(args)
        .output()
        .expect("run ratt")
}

pub fn ok(args: &[&str]) -> Output {
    let out = ratt(args);
    assert!(
        out.status.success(),
        "ratt {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// A minimal audit record with the given attention.
pub fn audit_record(id: usize, correct: bool, confidence: f64, attention: Vec<f64>) -> AttentionAuditRecord {
    let n = attention.len();
    AttentionAuditRecord {
        instance_id: id,
        doc_id: format!("doc{}", id / 3),
        tokens: (0..n).map(|k| format!("t{k}")).collect(),
        source: Span::new(0, 1),
        target: Span::new(n - 1, n),
        rationale: Some(Span::new(1, 2)),
        gold: "positive".into(),
        predicted: if correct { "positive" } else { "negative" }.into(),
        confidence,
        correct,
        faithfulness: RankMetrics::at(&attention, 1),
        plausibility: Some(RankMetrics::at(&attention, 1)),
        influence: InfluenceProfile {
            influences: vec![0.0; n],
            top_index: 1,
            base_confidence: confidence,
            predicted_class: 0,
        },
        attention,
    }
}

pub fn write_dump(path: &Path, records: &[AttentionAuditRecord]) {
    let mut buf = Vec::new();
    write_audit(&mut buf, records).unwrap();
    std::fs::write(path, buf).unwrap();
}

/// A running `judge-serve`; killed on drop.
pub struct Server {
    child: Child,
    pub base: String,
}

impl Server {
    pub fn start(args: &[&str]) -> Self {
        let mut child = Command::new(env!("CARGO_BIN_EXE_ratt"))
            .arg("judge-serve")
            .args(args)
            .args(["--port", "0"])
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .expect("spawn judge-serve");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap())
            .read_line(&mut line)
            .unwrap();
        let base = line
            .split_whitespace()
            .find(|w| w.starts_with("http://"))
            .unwrap_or_else(|| panic!("no address in {line:?}"))
            .to_owned();
        Self { child, base }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
