//! Sentence-level annotation input for `ingest`, one JSON object per line:
//!
//! ```text
//! {"doc_id": "d1", "tokens": [...], "pos_ids": [...], "senti_ids": [...],
//!  "entities": [[0,1],[2,4]],
//!  "relations": [{"source": 0, "target": 1, "label": "positive", "rationale": [1,2]}]}
//! ```
//!
//! `pos_ids`, `senti_ids`, `relations` and `rationale` may be omitted.

use std::path::Path;

use ratt_core::corpus::{generate_pairs, AnnotatedRelation, LabelSet, RelationInstance, SentenceInput, Span};
use ratt_core::Error;
use serde::Deserialize;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SentenceRecord {
    doc_id: String,
    tokens: Vec<String>,
    #[serde(default)]
    pos_ids: Option<Vec<usize>>,
    #[serde(default)]
    senti_ids: Option<Vec<usize>>,
    entities: Vec<Span>,
    #[serde(default)]
    relations: Vec<RelationRecord>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RelationRecord {
    source: usize,
    target: usize,
    label: String,
    #[serde(default)]
    rationale: Option<Span>,
}

/// Reads every sentence and expands it into ordered entity pairs.
pub fn read_sentences(text: &str, path: &Path, labels: &LabelSet) -> Result<Vec<RelationInstance>, Error> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fail = |message: String| Error::Ingest {
            path: path.to_owned(),
            line: lineno + 1,
            message,
        };
        let rec: SentenceRecord = serde_json::from_str(line).map_err(|e| fail(e.to_string()))?;
        let n = rec.tokens.len();
        let sentence = SentenceInput {
            doc_id: rec.doc_id,
            pos_ids: rec.pos_ids.unwrap_or_else(|| vec![0; n]),
            senti_ids: rec.senti_ids.unwrap_or_else(|| vec![0; n]),
            tokens: rec.tokens,
        };
        let relations = rec
            .relations
            .into_iter()
            .map(|r| {
                let label = labels
                    .parse(&r.label)
                    .filter(|l| !l.is_null())
                    .ok_or_else(|| fail(format!("unknown relation label {:?}", r.label)))?;
                Ok(AnnotatedRelation {
                    source: r.source,
                    target: r.target,
                    label,
                    rationale: r.rationale,
                })
            })
            .collect::<Result<Vec<_>, Error>>()?;
        let pairs = generate_pairs(&rec.entities, &relations, &sentence, out.len())
            .map_err(|e| fail(e.to_string()))?;
        for inst in &pairs {
            inst.validate().map_err(|e| fail(e.to_string()))?;
        }
        out.extend(pairs);
    }
    Ok(out)
}
