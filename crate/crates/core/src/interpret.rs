//! Attention audits: leave-one-out token influence and the probes-needed /
//! mass-needed ranking metrics.
//!
//! Both metrics rank tokens by attention weight and ask where a target token
//! lands. For faithfulness the target is the token whose masking hurts the
//! prediction most; for plausibility it is the first maximizer of the
//! ground-truth (rationale) attention.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{ground_truth_attention, RelationInstance, Span, UNK_ID};
use crate::error::Result;
use crate::model::{argmax_first, AttnLstm, WordInput};
use crate::numerics::softmax_slice;

/// `1 + |{j : att[j] > att[target]}|`.
pub fn probes_needed(attention: &[f64], target: usize) -> usize {
    let t = attention[target];
    1 + attention.iter().filter(|&&a| a > t).count()
}

/// Attention mass strictly above the target's weight.
pub fn mass_needed(attention: &[f64], target: usize) -> f64 {
    let t = attention[target];
    attention.iter().filter(|&&a| a > t).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfluenceProfile {
    /// `y - y_{-j}` per position; 0 at mention positions.
    pub influences: Vec<f64>,
    /// First maximizer of the influence among non-mention positions.
    pub top_index: usize,
    pub base_confidence: f64,
    pub predicted_class: usize,
}

/// Leave-one-out influence: for each position outside the two mentions,
/// replace its word embedding by UNK (other channels untouched) and record
/// the drop in confidence of the original prediction.
pub fn loo_influence(model: &AttnLstm, inst: &RelationInstance) -> Result<InfluenceProfile> {
    let words = model.eval_inputs(inst);
    let base = model.forward_words(inst, &words)?;
    let (pred, y) = argmax_first(&base.y);
    let mut influences = vec![0.0; inst.len()];
    let mut candidates = Vec::new();
    for j in 0..inst.len() {
        match words[j] {
            WordInput::SourceMask | WordInput::TargetMask => continue,
            WordInput::Token(id) => {
                candidates.push(j);
                if id == UNK_ID {
                    continue;
                }
                let mut masked = words.clone();
                masked[j] = WordInput::Token(UNK_ID);
                influences[j] = y - model.forward_words(inst, &masked)?.y[pred];
            }
        }
    }
    let top_index = first_max_among(&influences, &candidates).unwrap_or(0);
    Ok(InfluenceProfile {
        influences,
        top_index,
        base_confidence: y,
        predicted_class: pred,
    })
}

fn first_max_among(values: &[f64], candidates: &[usize]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for &j in candidates {
        if best.is_none_or(|b| values[j] > values[b]) {
            best = Some(j);
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankMetrics {
    pub target: usize,
    pub probes_needed: usize,
    pub mass_needed: f64,
}

impl RankMetrics {
    pub fn at(attention: &[f64], target: usize) -> Self {
        Self {
            target,
            probes_needed: probes_needed(attention, target),
            mass_needed: mass_needed(attention, target),
        }
    }
}

/// One line of an audit dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionAuditRecord {
    pub instance_id: usize,
    pub doc_id: String,
    pub tokens: Vec<String>,
    pub source: Span,
    pub target: Span,
    pub rationale: Option<Span>,
    pub gold: String,
    pub predicted: String,
    pub confidence: f64,
    pub correct: bool,
    pub attention: Vec<f64>,
    pub influence: InfluenceProfile,
    pub faithfulness: RankMetrics,
    /// Absent when the instance has no rationale.
    pub plausibility: Option<RankMetrics>,
}

/// Audit of one instance.
pub fn audit_instance(model: &AttnLstm, inst: &RelationInstance) -> Result<AttentionAuditRecord> {
    let influence = loo_influence(model, inst)?;
    let attention = model.evaluate(inst)?.attention;
    let faithfulness = RankMetrics::at(&attention, influence.top_index);
    let plausibility = match inst.rationale {
        Some(_) => {
            let a = ground_truth_attention(inst)?;
            Some(RankMetrics::at(&attention, argmax_first(&a).0))
        }
        None => None,
    };
    let labels = &model.labels;
    let pred_label = labels
        .label_of_class(influence.predicted_class)
        .expect("class from model");
    Ok(AttentionAuditRecord {
        instance_id: inst.id,
        doc_id: inst.doc_id.clone(),
        tokens: inst.tokens.clone(),
        source: inst.source,
        target: inst.target,
        rationale: inst.rationale,
        gold: labels.name(inst.label).to_owned(),
        predicted: labels.name(pred_label).to_owned(),
        confidence: influence.base_confidence,
        correct: pred_label == inst.label,
        attention,
        influence,
        faithfulness,
        plausibility,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub count: usize,
    pub probes_needed: Option<f64>,
    pub mass_needed: Option<f64>,
}

impl MeanMetrics {
    fn of<'a>(items: impl Iterator<Item = &'a RankMetrics>) -> Self {
        let (mut count, mut probes, mut mass) = (0usize, 0.0, 0.0);
        for m in items {
            count += 1;
            probes += m.probes_needed as f64;
            mass += m.mass_needed;
        }
        if count == 0 {
            return Self::default();
        }
        Self {
            count,
            probes_needed: Some(probes / count as f64),
            mass_needed: Some(mass / count as f64),
        }
    }
}

/// Means split by whether the prediction was correct.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitMeans {
    pub all: MeanMetrics,
    pub correct: MeanMetrics,
    pub wrong: MeanMetrics,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub instances: usize,
    pub faithfulness: SplitMeans,
    pub plausibility: SplitMeans,
}

impl AuditSummary {
    pub fn from_records(records: &[AttentionAuditRecord]) -> Self {
        let split = |pick: &dyn Fn(&AttentionAuditRecord) -> Option<RankMetrics>| SplitMeans {
            all: MeanMetrics::of(records.iter().filter_map(pick).collect::<Vec<_>>().iter()),
            correct: MeanMetrics::of(
                records
                    .iter()
                    .filter(|r| r.correct)
                    .filter_map(pick)
                    .collect::<Vec<_>>()
                    .iter(),
            ),
            wrong: MeanMetrics::of(
                records
                    .iter()
                    .filter(|r| !r.correct)
                    .filter_map(pick)
                    .collect::<Vec<_>>()
                    .iter(),
            ),
        };
        Self {
            instances: records.len(),
            faithfulness: split(&|r| Some(r.faithfulness)),
            plausibility: split(&|r| r.plausibility),
        }
    }
}

/// Audits every instance with a relation (non-∅) gold label. Records come
/// back in input order.
pub fn audit(
    model: &AttnLstm,
    instances: &[RelationInstance],
) -> Result<(Vec<AttentionAuditRecord>, AuditSummary)> {
    let records: Vec<AttentionAuditRecord> = instances
        .par_iter()
        .filter(|i| !i.is_null())
        .map(|inst| audit_instance(model, inst))
        .collect::<Result<_>>()?;
    let summary = AuditSummary::from_records(&records);
    Ok((records, summary))
}

pub fn write_audit<W: Write>(mut w: W, records: &[AttentionAuditRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_audit(text: &str) -> Result<Vec<AttentionAuditRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

/// Attention of an uninformative scorer: softmax of i.i.d. logits drawn
/// uniformly from `[-scale, scale]`.
pub fn random_attention<R: Rng + ?Sized>(len: usize, scale: f64, rng: &mut R) -> Vec<f64> {
    let logits: Vec<f64> = (0..len).map(|_| rng.gen_range(-scale..=scale)).collect();
    softmax_slice(&logits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Label, LabelSet, Vocab};
    use crate::model::tests::tiny_config;

    #[test]
    fn probes_examples() {
        assert_eq!(probes_needed(&[0.5, 0.3, 0.2], 1), 2);
        assert_eq!(probes_needed(&[0.5, 0.3, 0.2], 0), 1);
        assert_eq!(probes_needed(&[0.25; 4], 3), 1);
    }

    #[test]
    fn mass_examples() {
        assert_eq!(mass_needed(&[0.5, 0.3, 0.2], 1), 0.5);
        assert_eq!(mass_needed(&[0.5, 0.3, 0.2], 0), 0.0);
        assert!((mass_needed(&[0.5, 0.3, 0.2], 2) - 0.8).abs() < 1e-15);
    }

    fn setup() -> (AttnLstm, RelationInstance) {
        let inst = RelationInstance {
            id: 4,
            doc_id: "d".into(),
            tokens: ["they", "strongly", "praise", "the", "plan", "now"].map(String::from).to_vec(),
            pos_ids: vec![0, 1, 2, 0, 3, 1],
            senti_ids: vec![0; 6],
            source: Span::new(0, 1),
            target: Span::new(3, 5),
            rationale: Some(Span::new(2, 3)),
            label: Label::Relation(0),
        };
        let mut vocab = Vocab::from_instances([&inst]);
        vocab.insert("unused");
        let model = AttnLstm::new(tiny_config(), LabelSet::mpqa(true), vocab, 21).unwrap();
        (model, inst)
    }

    #[test]
    fn loo_skips_mentions_and_unknown_words() {
        let (model, mut inst) = setup();
        inst.tokens[5] = "never-seen".into();
        let prof = loo_influence(&model, &inst).unwrap();
        assert_eq!(prof.influences.len(), 6);
        for j in [0, 3, 4, 5] {
            assert_eq!(prof.influences[j], 0.0);
        }
        assert!([1, 2, 5].contains(&prof.top_index));
    }

    #[test]
    fn loo_single_token() {
        let (model, inst) = setup();
        let one = RelationInstance {
            tokens: vec!["praise".into()],
            pos_ids: vec![0],
            senti_ids: vec![0],
            source: Span::new(0, 1),
            target: Span::new(0, 1),
            rationale: None,
            ..inst
        };
        assert_eq!(loo_influence(&model, &one).unwrap().top_index, 0);
    }

    #[test]
    fn audit_record_consistency() {
        let (model, inst) = setup();
        let rec = audit_instance(&model, &inst).unwrap();
        assert_eq!(rec.plausibility.unwrap().target, 2);
        assert_eq!(rec.faithfulness.target, rec.influence.top_index);
        assert!(rec.faithfulness.probes_needed <= inst.len());
        assert!(rec.faithfulness.mass_needed < 1.0);
        let mut buf = Vec::new();
        write_audit(&mut buf, std::slice::from_ref(&rec)).unwrap();
        assert_eq!(read_audit(std::str::from_utf8(&buf).unwrap()).unwrap(), vec![rec]);
    }

    fn record(correct: bool, probes: usize, mass: f64) -> AttentionAuditRecord {
        let (model, inst) = setup();
        let mut r = audit_instance(&model, &inst).unwrap();
        r.correct = correct;
        r.faithfulness = RankMetrics {
            target: 0,
            probes_needed: probes,
            mass_needed: mass,
        };
        r.plausibility = None;
        r
    }

    #[test]
    fn summary_means_split_by_correctness() {
        let recs = [record(true, 2, 0.2), record(true, 4, 0.4), record(false, 1, 0.0)];
        let s = AuditSummary::from_records(&recs);
        assert_eq!(s.faithfulness.correct.probes_needed, Some(3.0));
        assert_eq!(s.faithfulness.correct.count, 2);
        assert_eq!(s.faithfulness.wrong.mass_needed, Some(0.0));
        assert_eq!(s.faithfulness.all.count, 3);
        assert_eq!(s.plausibility.all, MeanMetrics::default());
    }

    #[test]
    fn attending_to_single_token_rationale() {
        let att = [0.05, 0.05, 0.8, 0.05, 0.05];
        let m = RankMetrics::at(&att, 2);
        assert_eq!((m.probes_needed, m.mass_needed), (1, 0.0));
    }
}
