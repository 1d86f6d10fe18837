use super::{Label, RelationInstance, Span};
use crate::error::{Error, Result};

/// A tokenized sentence with its tag channels.
#[derive(Clone, Debug)]
pub struct SentenceInput {
    pub doc_id: String,
    pub tokens: Vec<String>,
    pub pos_ids: Vec<usize>,
    pub senti_ids: Vec<usize>,
}

/// An annotated relation between two entities of a sentence, referenced by
/// their index in the entity list.
#[derive(Clone, Debug)]
pub struct AnnotatedRelation {
    pub source: usize,
    pub target: usize,
    pub label: Label,
    pub rationale: Option<Span>,
}

/// Builds one instance per ordered pair of distinct entities. Pairs without
/// an annotated relation become ∅ instances. Instance ids count up from
/// `first_id` in row-major (source, target) order.
pub fn generate_pairs(
    entities: &[Span],
    relations: &[AnnotatedRelation],
    sentence: &SentenceInput,
    first_id: usize,
) -> Result<Vec<RelationInstance>> {
    let n = sentence.tokens.len();
    for e in entities {
        e.validate(n)?;
    }
    for r in relations {
        if r.source >= entities.len() || r.target >= entities.len() || r.source == r.target {
            return Err(Error::Contract(format!(
                "relation ({}, {}) does not reference two distinct listed entities",
                r.source, r.target
            )));
        }
        if r.label.is_null() {
            return Err(Error::Contract("annotated relation labelled ∅".into()));
        }
    }
    let mut out = Vec::with_capacity(entities.len() * entities.len().saturating_sub(1));
    for (a, &source) in entities.iter().enumerate() {
        for (b, &target) in entities.iter().enumerate() {
            if a == b {
                continue;
            }
            let annotated = relations.iter().find(|r| r.source == a && r.target == b);
            let inst = RelationInstance {
                id: first_id + out.len(),
                doc_id: sentence.doc_id.clone(),
                tokens: sentence.tokens.clone(),
                pos_ids: sentence.pos_ids.clone(),
                senti_ids: sentence.senti_ids.clone(),
                source,
                target,
                rationale: annotated.and_then(|r| r.rationale),
                label: annotated.map_or(Label::Null, |r| r.label),
            };
            inst.validate()?;
            out.push(inst);
        }
    }
    Ok(out)
}
