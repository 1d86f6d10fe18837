//! Loss components, in plain-value form and as graph nodes. Both forms share
//! the same definitions so reported losses equal the differentiated ones.

use serde::{Deserialize, Serialize};

use super::{Mode, TrainConfig};
use crate::corpus::{ground_truth_attention, rationale_indicators, Label, LabelSet, RelationInstance, SubsampleMask};
use crate::error::{Error, Result};
use crate::model::{ForwardNodes, ForwardResult};
use crate::numerics::{bce_mean, kl_divergence, Graph, NodeId, PROB_FLOOR};

/// Cross-entropy `-ln y[class]`, with `y[class]` floored at 1e-12.
pub fn loss_clf(y: &[f64], class: usize) -> f64 {
    -y[class].max(PROB_FLOOR).ln()
}

/// `KL(target || predicted)` with `0 ln 0 = 0`.
pub fn loss_attn(target: &[f64], predicted: &[f64]) -> Result<f64> {
    if target.len() != predicted.len() {
        return Err(Error::Contract(format!(
            "attention lengths differ: {} vs {}",
            target.len(),
            predicted.len()
        )));
    }
    Ok(kl_divergence(target, predicted))
}

/// Scale applied to the attention loss of one instance when only the
/// rationales in `mask` may be used: ∅ instances keep full weight, sampled
/// relations are scaled by `1/gamma`, the rest get zero.
pub fn attn_loss_scale(instance_id: usize, label: Label, mask: &SubsampleMask) -> f64 {
    match label {
        Label::Null => 1.0,
        Label::Relation(_) if mask.contains(instance_id) => 1.0 / mask.gamma,
        Label::Relation(_) => 0.0,
    }
}

pub fn loss_attn_subsampled(instance_id: usize, label: Label, l_attn: f64, mask: &SubsampleMask) -> f64 {
    match attn_loss_scale(instance_id, label, mask) {
        s if s == 0.0 => 0.0,
        s => l_attn * s,
    }
}

/// Mean per-token binary cross-entropy of rationale probabilities.
pub fn loss_rationale(probs: &[f64], inst: &RelationInstance) -> Result<f64> {
    if probs.len() != inst.len() {
        return Err(Error::Contract(format!(
            "{} rationale probabilities for {} tokens",
            probs.len(),
            inst.len()
        )));
    }
    Ok(bce_mean(&rationale_indicators(inst), probs))
}

/// Loss components of one instance. `attn` and `rationale` are the raw,
/// unweighted values (`None` when not applicable); `total` is the objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub clf: f64,
    pub attn: Option<f64>,
    pub rationale: f64,
    pub total: f64,
}

/// Weights `(w_attn, w_r)` multiplying the raw attention and rationale losses.
fn weights(inst: &RelationInstance, config: &TrainConfig, mask: &SubsampleMask) -> (f64, f64) {
    match config.mode {
        Mode::Baseline => (0.0, 0.0),
        Mode::AttnTrained => {
            // Relations without a rationale train on classification only.
            if !inst.is_null() && inst.rationale.is_none() {
                (0.0, 0.0)
            } else {
                (config.lambda_attn * attn_loss_scale(inst.id, inst.label, mask), 0.0)
            }
        }
        Mode::PredRationales => (0.0, config.lambda_r),
    }
}

fn class_of(labels: &LabelSet, inst: &RelationInstance) -> Result<usize> {
    labels.class_index(inst.label).ok_or_else(|| {
        Error::Contract(format!("label of instance {} is not in the label set", inst.id))
    })
}

/// The per-instance objective computed from a finished forward pass.
pub fn total_loss(
    inst: &RelationInstance,
    fr: &ForwardResult,
    labels: &LabelSet,
    config: &TrainConfig,
    mask: &SubsampleMask,
) -> Result<LossParts> {
    let clf = loss_clf(&fr.y, class_of(labels, inst)?);
    let attn = match ground_truth_attention(inst) {
        Ok(a) => Some(loss_attn(&a, &fr.attention)?),
        Err(_) => None,
    };
    let rationale = loss_rationale(&fr.rationale_probs, inst)?;
    let (wa, wr) = weights(inst, config, mask);
    let mut total = clf;
    if wa != 0.0 {
        total += wa * attn.unwrap_or(0.0);
    }
    if wr != 0.0 {
        total += wr * rationale;
    }
    Ok(LossParts {
        clf,
        attn,
        rationale,
        total,
    })
}

/// Appends the objective to `g`. Returns the scalar loss node and the parts.
pub fn loss_graph(
    g: &mut Graph<'_>,
    nodes: &ForwardNodes,
    inst: &RelationInstance,
    labels: &LabelSet,
    config: &TrainConfig,
    mask: &SubsampleMask,
) -> Result<(NodeId, LossParts)> {
    let clf = g.neg_log_pick(nodes.y, class_of(labels, inst)?)?;
    let mut terms = vec![clf];
    let (wa, wr) = weights(inst, config, mask);

    let attn = match ground_truth_attention(inst) {
        Ok(a) => {
            let node = g.kl_div(a, nodes.attention)?;
            if wa != 0.0 {
                terms.push(g.scale(node, wa));
            }
            Some(g.scalar(node))
        }
        Err(_) => None,
    };
    let r_node = g.bce_mean(rationale_indicators(inst), nodes.rationale_probs)?;
    if wr != 0.0 {
        terms.push(g.scale(r_node, wr));
    }
    let total = g.sum(&terms)?;
    let parts = LossParts {
        clf: g.scalar(clf),
        attn,
        rationale: g.scalar(r_node),
        total: g.scalar(total),
    };
    Ok((total, parts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{instance, Span};
    use std::collections::BTreeSet;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn clf_examples() {
        assert_eq!(loss_clf(&[1.0, 0.0, 0.0], 0), 0.0);
        assert!(close(loss_clf(&[0.5, 0.5], 1), 2f64.ln()));
        assert!(close(loss_clf(&[0.25; 4], 3), 4f64.ln()));
        assert!(close(loss_clf(&[1.0, 0.0], 1), -(1e-12f64).ln()));
    }

    #[test]
    fn attn_examples() {
        let a = [0.1, 0.2, 0.7];
        assert_eq!(loss_attn(&a, &a).unwrap(), 0.0);
        assert!(close(loss_attn(&[0.0, 1.0, 0.0, 0.0], &[0.25; 4]).unwrap(), 4f64.ln()));
        assert!(close(loss_attn(&[0.5, 0.5, 0.0, 0.0], &[0.25; 4]).unwrap(), 2f64.ln()));
        assert!(loss_attn(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn subsampled_cases() {
        let mask = SubsampleMask {
            gamma: 0.25,
            member_ids: BTreeSet::from([3]),
            seed: 0,
        };
        assert_eq!(loss_attn_subsampled(3, Label::Relation(0), 1.0, &mask), 4.0);
        assert_eq!(loss_attn_subsampled(4, Label::Relation(0), 1.0, &mask), 0.0);
        assert_eq!(loss_attn_subsampled(4, Label::Null, 1.7, &mask), 1.7);
    }

    #[test]
    fn rationale_examples() {
        let inst = instance(4, Label::Relation(0), Some(Span::new(1, 3)));
        let exact = [PROB_FLOOR, 1.0 - PROB_FLOOR, 1.0 - PROB_FLOOR, PROB_FLOOR];
        assert!(loss_rationale(&exact, &inst).unwrap() < 1e-9);
        assert!(close(loss_rationale(&[0.5; 4], &inst).unwrap(), 2f64.ln()));
        let null = instance(3, Label::Null, None);
        assert!(close(loss_rationale(&[0.5; 3], &null).unwrap(), 2f64.ln()));
        assert!(loss_rationale(&[0.5; 3], &inst).is_err());
    }

    fn fr(n: usize) -> ForwardResult {
        ForwardResult {
            y: vec![0.2, 0.3, 0.1, 0.4],
            attention: vec![1.0 / n as f64; n],
            rationale_probs: vec![0.3; n],
            hidden: vec![],
            query: vec![],
        }
    }

    #[test]
    fn total_loss_by_mode() {
        let labels = LabelSet::mpqa(true);
        let inst = instance(4, Label::Relation(1), Some(Span::new(1, 2)));
        let mask = SubsampleMask::full(std::slice::from_ref(&inst));
        let f = fr(4);
        let base = TrainConfig {
            mode: Mode::Baseline,
            ..TrainConfig::default()
        };
        let b = total_loss(&inst, &f, &labels, &base, &mask).unwrap();
        assert!(close(b.total, 0.3f64.ln().abs()));

        let zero = TrainConfig {
            mode: Mode::AttnTrained,
            lambda_attn: 0.0,
            ..TrainConfig::default()
        };
        assert_eq!(total_loss(&inst, &f, &labels, &zero, &mask).unwrap().total, b.total);

        let attn = TrainConfig {
            mode: Mode::AttnTrained,
            ..TrainConfig::default()
        };
        let a = total_loss(&inst, &f, &labels, &attn, &mask).unwrap();
        assert!(close(a.total, b.total + 0.3 * 4f64.ln()));

        let pred = TrainConfig {
            mode: Mode::PredRationales,
            lambda_r: 0.05,
            ..TrainConfig::default()
        };
        let p = total_loss(&inst, &f, &labels, &pred, &mask).unwrap();
        assert!(close(p.total, b.total + 0.05 * p.rationale));
    }

    #[test]
    fn relation_without_rationale_is_classification_only() {
        let labels = LabelSet::mpqa(true);
        let inst = instance(4, Label::Relation(1), None);
        let mask = SubsampleMask::full(std::slice::from_ref(&inst));
        let cfg = TrainConfig {
            mode: Mode::AttnTrained,
            ..TrainConfig::default()
        };
        let parts = total_loss(&inst, &fr(4), &labels, &cfg, &mask).unwrap();
        assert_eq!(parts.total, parts.clf);
        assert_eq!(parts.attn, None);
    }
}
