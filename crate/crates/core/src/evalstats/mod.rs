//! Task metrics, plausibility-judgment aggregation and rationale sweeps.

mod judgments;
mod sweep;

use serde::{Deserialize, Serialize};

pub use judgments::{
    aggregate_judgments, sign_test_two_sided, JudgmentRecord, PlausibilityReport, Preference,
    SystemRates,
};
pub use sweep::{rationale_sweep, GammaSummary, SweepCell, SweepTable};

use crate::corpus::{Label, LabelSet};

/// Precision, recall and F for one relation label, one-vs-rest among
/// non-∅ predictions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelScores {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub support: usize,
    pub predicted: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub total: usize,
    pub correct: usize,
    /// Gold relations predicted with the right label.
    pub relation_hits: usize,
    /// Instances predicted as some relation.
    pub predicted_relations: usize,
    /// Instances whose gold label is a relation.
    pub gold_relations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub include_null: bool,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub per_label: Vec<LabelScores>,
    pub counts: Counts,
    /// Names of metrics whose denominator was empty (reported as 0).
    pub undefined: Vec<String>,
}

impl EvalSummary {
    /// F-score for tasks that include ∅, accuracy otherwise.
    pub fn primary_metric(&self) -> f64 {
        if self.include_null {
            self.f_score
        } else {
            self.accuracy
        }
    }
}

fn ratio(num: usize, den: usize, name: &str, undefined: &mut Vec<String>) -> f64 {
    if den == 0 {
        undefined.push(name.to_owned());
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Scores `(gold, predicted)` pairs. Relation precision/recall are
/// micro-averaged over instances that are predicted (resp. annotated) as
/// having a relation; accuracy is over all pairs.
pub fn score_predictions(pairs: &[(Label, Label)], labels: &LabelSet) -> EvalSummary {
    let mut undefined = Vec::new();
    let mut counts = Counts {
        total: pairs.len(),
        ..Counts::default()
    };
    for &(gold, pred) in pairs {
        counts.correct += usize::from(gold == pred);
        counts.predicted_relations += usize::from(!pred.is_null());
        counts.gold_relations += usize::from(!gold.is_null());
        counts.relation_hits += usize::from(gold == pred && !gold.is_null());
    }
    let accuracy = ratio(counts.correct, counts.total, "accuracy", &mut undefined);
    let precision = ratio(counts.relation_hits, counts.predicted_relations, "precision", &mut undefined);
    let recall = ratio(counts.relation_hits, counts.gold_relations, "recall", &mut undefined);
    let f_score = harmonic(precision, recall);

    let per_label = (0..labels.names.len())
        .map(|k| {
            let l = Label::Relation(k);
            let tp = pairs.iter().filter(|&&(g, p)| g == l && p == l).count();
            let predicted = pairs.iter().filter(|&&(_, p)| p == l).count();
            let support = pairs.iter().filter(|&&(g, _)| g == l).count();
            let name = &labels.names[k];
            let precision = ratio(tp, predicted, &format!("precision[{name}]"), &mut undefined);
            let recall = ratio(tp, support, &format!("recall[{name}]"), &mut undefined);
            LabelScores {
                label: name.clone(),
                precision,
                recall,
                f_score: harmonic(precision, recall),
                support,
                predicted,
            }
        })
        .collect();
    EvalSummary {
        include_null: labels.include_null,
        accuracy,
        precision,
        recall,
        f_score,
        per_label,
        counts,
        undefined,
    }
}
