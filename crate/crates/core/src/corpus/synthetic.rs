//! Synthetic relation corpus with planted cue tokens.
//!
//! Each sentence has two entity mentions. A relation instance carries exactly
//! one cue word strictly between the two mentions; the cue's class is the
//! label and its position is the rationale. ∅ instances have no cue between
//! the mentions. Distractors are cue words placed outside the between
//! region, so a model must use positions to tell the real cue apart.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Label, LabelSet, RelationInstance, Span};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CueClass {
    pub label: String,
    pub words: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub instances: usize,
    pub sentences_per_doc: usize,
    pub filler_vocab: usize,
    pub entity_vocab: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub cues: Vec<CueClass>,
    pub distractor_rate: f64,
    pub null_rate: f64,
    pub pos_tags: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        let class = |label: &str, words: &[&str]| CueClass {
            label: label.into(),
            words: words.iter().map(|w| w.to_string()).collect(),
        };
        Self {
            instances: 2000,
            sentences_per_doc: 5,
            filler_vocab: 300,
            entity_vocab: 40,
            min_len: 8,
            max_len: 20,
            cues: vec![
                class("positive", &["good", "praise", "support", "admire", "welcome"]),
                class("negative", &["bad", "criticize", "oppose", "condemn", "reject"]),
            ],
            distractor_rate: 0.5,
            null_rate: 0.3,
            pos_tags: 8,
        }
    }
}

/// Shortest sentence able to hold two 2-token mentions, a cue between them
/// and a distractor outside.
const MIN_SENTENCE: usize = 6;

impl SyntheticConfig {
    pub fn labels(&self) -> Result<LabelSet> {
        LabelSet::new(self.cues.iter().map(|c| c.label.clone()), self.null_rate > 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.cues.is_empty() || self.cues.iter().any(|c| c.words.is_empty()) {
            return bad("every label needs at least one cue word".into());
        }
        if self.cues.len() < 2 && self.distractor_rate > 0.0 && self.null_rate == 0.0 {
            return bad("distractors need at least two cue classes".into());
        }
        let mut seen = HashMap::new();
        for c in &self.cues {
            for w in &c.words {
                if let Some(prev) = seen.insert(w.as_str(), c.label.as_str()) {
                    return bad(format!("cue {w:?} listed for both {prev:?} and {:?}", c.label));
                }
            }
        }
        if self.min_len < MIN_SENTENCE || self.max_len < self.min_len {
            return bad(format!(
                "sentence length range [{}, {}] must start at {MIN_SENTENCE} or more",
                self.min_len, self.max_len
            ));
        }
        for (name, rate) in [("distractor_rate", self.distractor_rate), ("null_rate", self.null_rate)] {
            if !(0.0..=1.0).contains(&rate) {
                return bad(format!("{name} {rate} outside [0, 1]"));
            }
        }
        if self.null_rate >= 1.0 {
            return bad("null_rate 1 leaves no relation instances".into());
        }
        if self.filler_vocab == 0 || self.entity_vocab == 0 || self.sentences_per_doc == 0 || self.pos_tags < 3 {
            return bad("vocabulary sizes, sentences_per_doc must be positive and pos_tags ≥ 3".into());
        }
        self.labels().map(|_| ())
    }

    fn cue_class(&self, word: &str) -> Option<usize> {
        self.cues.iter().position(|c| c.words.iter().any(|w| w == word))
    }
}

/// Generates `config.instances` instances, deterministically per seed.
pub fn generate_synthetic(config: &SyntheticConfig, seed: u64) -> Result<(LabelSet, Vec<RelationInstance>)> {
    config.validate()?;
    let labels = config.labels()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let instances = (0..config.instances)
        .map(|id| generate_one(config, id, &mut rng))
        .collect();
    Ok((labels, instances))
}

fn generate_one(cfg: &SyntheticConfig, id: usize, rng: &mut ChaCha8Rng) -> RelationInstance {
    let len = rng.gen_range(cfg.min_len..=cfg.max_len);
    let first_len = rng.gen_range(1..=2);
    let second_len = rng.gen_range(1..=2);
    let is_null = rng.gen_bool(cfg.null_rate);
    let has_distractor = rng.gen_bool(cfg.distractor_rate);

    // Split the filler budget into before / between / after; the between
    // region is never empty and the outside regions leave room for a distractor.
    let budget = len - first_len - second_len;
    let mid = rng.gen_range(1..budget);
    let outside = budget - mid;
    let pre = rng.gen_range(0..=outside);
    let post = outside - pre;

    let mut tokens: Vec<String> = (0..len)
        .map(|_| format!("w{}", rng.gen_range(0..cfg.filler_vocab)))
        .collect();
    let first = Span::new(pre, pre + first_len);
    let second = Span::new(first.end + mid, first.end + mid + second_len);
    debug_assert_eq!(second.end + post, len);
    for span in [first, second] {
        for t in &mut tokens[span.start..span.end] {
            *t = format!("ent{}", rng.gen_range(0..cfg.entity_vocab));
        }
    }

    let (label, rationale) = if is_null {
        (Label::Null, None)
    } else {
        let class = rng.gen_range(0..cfg.cues.len());
        let pos = rng.gen_range(first.end..second.start);
        tokens[pos] = cfg.cues[class].words.choose(rng).expect("non-empty").clone();
        (Label::Relation(class), Some(Span::new(pos, pos + 1)))
    };

    if has_distractor {
        let pool: Vec<usize> = match label {
            Label::Relation(c) => (0..cfg.cues.len()).filter(|&k| k != c).collect(),
            Label::Null => (0..cfg.cues.len()).collect(),
        };
        if let Some(&class) = pool.choose(rng) {
            let outside_slots: Vec<usize> = (0..first.start).chain(second.end..len).collect();
            let pos = *outside_slots.choose(rng).expect("outside region non-empty");
            tokens[pos] = cfg.cues[class].words.choose(rng).expect("non-empty").clone();
        }
    }

    let (source, target) = if rng.gen_bool(0.5) {
        (first, second)
    } else {
        (second, first)
    };
    let pos_ids = tokens
        .iter()
        .map(|t| {
            if t.starts_with("ent") {
                0
            } else if cfg.cue_class(t).is_some() {
                1
            } else {
                let k: usize = t[1..].parse().unwrap_or(0);
                2 + k % (cfg.pos_tags - 2)
            }
        })
        .collect();
    RelationInstance {
        id,
        doc_id: format!("syn{:05}", id / cfg.sentences_per_doc),
        senti_ids: vec![0; len],
        pos_ids,
        tokens,
        source,
        target,
        rationale,
        label,
    }
}

/// Recomputes the label of a synthetic instance from its tokens alone: the
/// class of the single cue strictly between the two mentions, or ∅ when there
/// is none. Returns `None` for a sentence that breaks the construction.
pub fn check_synthetic_label(config: &SyntheticConfig, inst: &RelationInstance) -> Option<Label> {
    let lo = inst.source.end.min(inst.target.end);
    let hi = inst.source.start.max(inst.target.start);
    let cues: Vec<usize> = (lo..hi)
        .filter_map(|i| config.cue_class(&inst.tokens[i]))
        .collect();
    match cues.as_slice() {
        [] => Some(Label::Null),
        [c] => Some(Label::Relation(*c)),
        _ => None,
    }
}
