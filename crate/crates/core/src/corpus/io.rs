use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{LabelSet, RelationInstance, Span};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    doc_id: String,
    tokens: Vec<String>,
    #[serde(default)]
    pos_ids: Option<Vec<usize>>,
    #[serde(default)]
    senti_ids: Option<Vec<usize>>,
    source: Span,
    target: Span,
    #[serde(default)]
    rationale: Option<Span>,
    label: String,
}

/// Loads and validates a JSONL corpus file. Blank lines are skipped; any
/// invalid line aborts the load with an error naming its line number.
pub fn load_corpus(path: impl AsRef<Path>, labels: &LabelSet) -> Result<Vec<RelationInstance>> {
    let path = path.as_ref();
    let file = File::open(path)?;
    read_corpus(BufReader::new(file), path, labels)
}

pub fn read_corpus<R: BufRead>(
    reader: R,
    path: &Path,
    labels: &LabelSet,
) -> Result<Vec<RelationInstance>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fail = |message: String| Error::Ingest {
            path: PathBuf::from(path),
            line: lineno + 1,
            message,
        };
        let rec: Record = serde_json::from_str(&line).map_err(|e| fail(e.to_string()))?;
        let label = labels
            .parse(&rec.label)
            .ok_or_else(|| fail(format!("unknown label {:?}", rec.label)))?;
        let n = rec.tokens.len();
        let inst = RelationInstance {
            id: out.len(),
            doc_id: rec.doc_id,
            pos_ids: rec.pos_ids.unwrap_or_else(|| vec![0; n]),
            senti_ids: rec.senti_ids.unwrap_or_else(|| vec![0; n]),
            tokens: rec.tokens,
            source: rec.source,
            target: rec.target,
            rationale: rec.rationale,
            label,
        };
        inst.validate().map_err(|e| fail(e.to_string()))?;
        out.push(inst);
    }
    Ok(out)
}

pub fn save_corpus(
    path: impl AsRef<Path>,
    instances: &[RelationInstance],
    labels: &LabelSet,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_corpus(&mut w, instances, labels)?;
    w.flush()?;
    Ok(())
}

pub fn write_corpus<W: Write>(
    mut w: W,
    instances: &[RelationInstance],
    labels: &LabelSet,
) -> Result<()> {
    for inst in instances {
        let rec = Record {
            doc_id: inst.doc_id.clone(),
            tokens: inst.tokens.clone(),
            pos_ids: Some(inst.pos_ids.clone()),
            senti_ids: Some(inst.senti_ids.clone()),
            source: inst.source,
            target: inst.target,
            rationale: inst.rationale,
            label: labels.name(inst.label).to_owned(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
