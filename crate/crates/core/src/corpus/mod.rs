//! Relation instances and everything that prepares them for training.
//!
//! The interchange format is JSONL, one instance per line:
//!
//! ```text
//! {"doc_id": "d1", "tokens": ["I", "respect", "my", "collaborator"],
//!  "pos_ids": [0, 1, 2, 3], "senti_ids": [0, 1, 0, 0],
//!  "source": [0, 1], "target": [2, 4], "rationale": [1, 2], "label": "positive"}
//! ```
//!
//! Spans are half-open token ranges. `pos_ids` and `senti_ids` may be omitted.

mod folds;
mod io;
mod pairs;
mod sampling;
mod synthetic;
mod vocab;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use folds::{make_folds, Fold, FoldPlan};
pub use io::{load_corpus, read_corpus, save_corpus, write_corpus};
pub use pairs::{generate_pairs, AnnotatedRelation, SentenceInput};
pub use sampling::{draw_subsample_mask, undersample, SubsampleMask};
pub use synthetic::{check_synthetic_label, generate_synthetic, SyntheticConfig};
pub use vocab::{Vocab, UNK, UNK_ID};

use crate::error::{Error, Result};

/// Half-open token range `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, i: usize) -> bool {
        self.start <= i && i < self.end
    }

    pub fn validate(&self, sentence_len: usize) -> Result<()> {
        if self.start < self.end && self.end <= sentence_len {
            Ok(())
        } else {
            Err(Error::Contract(format!(
                "span [{}, {}) invalid for sentence of {sentence_len} tokens",
                self.start, self.end
            )))
        }
    }
}

impl From<[usize; 2]> for Span {
    fn from([start, end]: [usize; 2]) -> Self {
        Self { start, end }
    }
}

impl From<Span> for [usize; 2] {
    fn from(s: Span) -> Self {
        [s.start, s.end]
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

/// A relation label: one of the dataset's relation classes, or no relation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Relation(usize),
    Null,
}

impl Label {
    pub fn is_null(self) -> bool {
        matches!(self, Label::Null)
    }
}

/// Canonical name of the no-relation label in corpus files.
pub const NULL_LABEL: &str = "none";

/// The label inventory of a task. `include_null` selects the Include-∅
/// variant, where the model must also decide whether a relation exists.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    pub names: Vec<String>,
    pub include_null: bool,
}

impl LabelSet {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>, include_null: bool) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::Config("label set is empty".into()));
        }
        for (i, n) in names.iter().enumerate() {
            if is_null_name(n) || names[..i].contains(n) {
                return Err(Error::Config(format!("bad or duplicate label name {n:?}")));
            }
        }
        Ok(Self {
            names,
            include_null,
        })
    }

    /// `{positive, neutral, negative}` opinion polarity labels.
    pub fn mpqa(include_null: bool) -> Self {
        Self::new(["positive", "neutral", "negative"], include_null).expect("static labels")
    }

    /// `{goodfor, badfor}` effect labels.
    pub fn gfbf(include_null: bool) -> Self {
        Self::new(["goodfor", "badfor"], include_null).expect("static labels")
    }

    /// Number of output classes of the classifier.
    pub fn num_classes(&self) -> usize {
        self.names.len() + usize::from(self.include_null)
    }

    /// Classifier output index of `label`. ∅ is the last class.
    pub fn class_index(&self, label: Label) -> Option<usize> {
        match label {
            Label::Relation(i) if i < self.names.len() => Some(i),
            Label::Null if self.include_null => Some(self.names.len()),
            _ => None,
        }
    }

    pub fn label_of_class(&self, class: usize) -> Option<Label> {
        if class < self.names.len() {
            Some(Label::Relation(class))
        } else if self.include_null && class == self.names.len() {
            Some(Label::Null)
        } else {
            None
        }
    }

    pub fn parse(&self, name: &str) -> Option<Label> {
        if is_null_name(name) {
            return self.include_null.then_some(Label::Null);
        }
        self.names.iter().position(|n| n == name).map(Label::Relation)
    }

    pub fn name(&self, label: Label) -> &str {
        match label {
            Label::Relation(i) => &self.names[i],
            Label::Null => NULL_LABEL,
        }
    }
}

fn is_null_name(name: &str) -> bool {
    matches!(name, "none" | "null" | "∅" | "NONE")
}

/// One classification unit: a sentence with an ordered source/target pair.
#[derive(Clone, Debug, PartialEq)]
pub struct RelationInstance {
    /// Position in the corpus it was loaded from or generated into.
    pub id: usize,
    pub doc_id: String,
    pub tokens: Vec<String>,
    pub pos_ids: Vec<usize>,
    pub senti_ids: Vec<usize>,
    pub source: Span,
    pub target: Span,
    pub rationale: Option<Span>,
    pub label: Label,
}

impl RelationInstance {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn is_null(&self) -> bool {
        self.label.is_null()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.tokens.len();
        if n == 0 {
            return Err(Error::Contract("empty sentence".into()));
        }
        if self.pos_ids.len() != n || self.senti_ids.len() != n {
            return Err(Error::Contract(format!(
                "{n} tokens but {} pos_ids and {} senti_ids",
                self.pos_ids.len(),
                self.senti_ids.len()
            )));
        }
        self.source.validate(n)?;
        self.target.validate(n)?;
        if let Some(r) = self.rationale {
            if self.label.is_null() {
                return Err(Error::Contract("no-relation instance carries a rationale".into()));
            }
            r.validate(n)?;
        }
        Ok(())
    }
}

/// Ground-truth attention over sentence positions: uniform over the
/// rationale for a relation, uniform over the whole sentence for ∅.
pub fn ground_truth_attention(instance: &RelationInstance) -> Result<Vec<f64>> {
    let n = instance.len();
    if n == 0 {
        return Err(Error::Contract("empty sentence".into()));
    }
    if instance.is_null() {
        return Ok(vec![1.0 / n as f64; n]);
    }
    let c = instance.rationale.ok_or_else(|| {
        Error::Contract(format!(
            "instance {} has a relation label but no rationale",
            instance.id
        ))
    })?;
    c.validate(n)?;
    let w = 1.0 / c.len() as f64;
    Ok((0..n).map(|i| if c.contains(i) { w } else { 0.0 }).collect())
}

/// Binary per-token rationale indicators: 1 inside the rationale of a
/// relation instance, 0 elsewhere and everywhere for ∅.
pub fn rationale_indicators(instance: &RelationInstance) -> Vec<f64> {
    (0..instance.len())
        .map(|i| match (instance.label, instance.rationale) {
            (Label::Relation(_), Some(c)) if c.contains(i) => 1.0,
            _ => 0.0,
        })
        .collect()
}

#[cfg(test)]
pub(crate) fn instance(n: usize, label: Label, rationale: Option<Span>) -> RelationInstance {
    RelationInstance {
        id: 0,
        doc_id: "d".into(),
        tokens: (0..n).map(|i| format!("w{i}")).collect(),
        pos_ids: vec![0; n],
        senti_ids: vec![0; n],
        source: Span::new(0, 1),
        target: Span::new(n - 1, n),
        rationale,
        label,
    }
}
