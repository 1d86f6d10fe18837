//! Objective assembly and the SGD training loop.

mod loss;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use loss::{
    attn_loss_scale, loss_attn, loss_attn_subsampled, loss_clf, loss_graph, loss_rationale,
    total_loss, LossParts,
};

use crate::corpus::{draw_subsample_mask, LabelSet, RelationInstance, SubsampleMask, Vocab};
use crate::error::{Error, Result};
use crate::evalstats::{score_predictions, EvalSummary};
use crate::model::{AttnLstm, ModelConfig, ModelParams, ParamGrads};
use crate::numerics::Graph;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Classification loss only.
    Baseline,
    /// Classification plus KL attention supervision.
    AttnTrained,
    /// Classification plus an auxiliary rationale-tagging loss.
    PredRationales,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "attn-trained" => Ok(Mode::AttnTrained),
            "pred-rationales" => Ok(Mode::PredRationales),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

/// Best `lambda_r` per task variant: MPQA with/without ∅, GFBF with/without ∅.
pub const LAMBDA_R_MPQA_INCLUDE_NULL: f64 = 0.05;
pub const LAMBDA_R_MPQA_EXCLUDE_NULL: f64 = 0.25;
pub const LAMBDA_R_GFBF_INCLUDE_NULL: f64 = 0.25;
pub const LAMBDA_R_GFBF_EXCLUDE_NULL: f64 = 0.3;
/// Grid searched for `lambda_r`.
pub const LAMBDA_R_GRID: [f64; 8] = [0.01, 0.025, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3];

/// Every training knob. Serialized as one flat JSON object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub mode: Mode,
    pub lambda_attn: f64,
    pub lambda_r: f64,
    /// Fraction of relation rationales available (attn-trained only).
    pub gamma: f64,
    pub learning_rate: f64,
    /// Learning-rate multiplier applied after an epoch without dev improvement.
    pub lr_decay: f64,
    /// Global gradient-norm clip.
    pub clip_norm: f64,
    pub max_epochs: usize,
    pub patience: usize,
    /// Stop as soon as the dev metric reaches this value.
    pub target_metric: Option<f64>,
    pub seed: u64,
    pub labels: Vec<String>,
    pub include_null: bool,
    #[serde(flatten)]
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::AttnTrained,
            lambda_attn: 0.3,
            lambda_r: LAMBDA_R_MPQA_INCLUDE_NULL,
            gamma: 1.0,
            learning_rate: 0.5,
            lr_decay: 0.9,
            clip_norm: 5.0,
            max_epochs: 300,
            patience: 10,
            target_metric: None,
            seed: 1,
            labels: vec!["positive".into(), "negative".into()],
            include_null: true,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn label_set(&self) -> Result<LabelSet> {
        LabelSet::new(self.labels.iter().cloned(), self.include_null)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, v) in [
            ("lambda_attn", self.lambda_attn),
            ("lambda_r", self.lambda_r),
            ("learning_rate", self.learning_rate),
            ("clip_norm", self.clip_norm),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a finite non-negative number, got {v}"));
            }
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad(format!("lr_decay must lie in (0, 1], got {}", self.lr_decay));
        }
        if self.max_epochs == 0 || self.patience == 0 {
            return bad("max_epochs and patience must be positive".into());
        }
        self.model.validate()?;
        self.label_set().map(|_| ())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub learning_rate: f64,
    pub loss_clf: f64,
    /// Mean raw KL attention loss over instances that have a ground truth.
    pub loss_attn: f64,
    pub loss_rationale: f64,
    pub loss_total: f64,
    pub dev_metric: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub mode: Mode,
    pub seed: u64,
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch of the selected checkpoint.
    pub best_epoch: usize,
    pub best_dev_metric: f64,
    pub rationales_used: usize,
    pub checkpoint: Option<String>,
}

impl TrainReport {
    pub fn epochs_run(&self) -> usize {
        self.epochs.len()
    }
}

/// `params -= lr * grads`.
pub fn sgd_step(params: &mut ModelParams, grads: &ParamGrads, lr: f64) {
    for ((_, p), (_, g)) in params.iter_mut().zip(grads.iter()) {
        p.axpy(-lr, g);
    }
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`.
pub fn clip_global_norm(grads: &mut ParamGrads, max_norm: f64) -> f64 {
    let norm = grads.sq_norm().sqrt();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}

/// Loss parts and parameter gradients of the objective on one instance,
/// using the given word inputs.
pub fn instance_gradients(
    model: &AttnLstm,
    inst: &RelationInstance,
    words: &[crate::model::WordInput],
    config: &TrainConfig,
    mask: &SubsampleMask,
) -> Result<(LossParts, ParamGrads)> {
    let mut g = Graph::new();
    let nodes = model.forward_graph(&mut g, inst, words)?;
    let (loss, parts) = loss_graph(&mut g, &nodes, inst, &model.labels, config, mask)?;
    let mut grads = g.backward(loss)?;
    Ok((parts, nodes.param_grads(&mut grads, &model.params)))
}

/// Predicted class per instance, computed in parallel and returned in input order.
pub fn predict_all(model: &AttnLstm, instances: &[RelationInstance]) -> Result<Vec<(usize, f64)>> {
    instances.par_iter().map(|inst| model.predict(inst)).collect()
}

/// Scores `model` on `instances` with the task metric of its label set.
pub fn evaluate(model: &AttnLstm, instances: &[RelationInstance]) -> Result<EvalSummary> {
    let preds = predict_all(model, instances)?;
    let pairs: Vec<_> = instances
        .iter()
        .zip(preds)
        .map(|(inst, (class, _))| {
            let pred = model.labels.label_of_class(class).expect("class from model");
            (inst.label, pred)
        })
        .collect();
    Ok(score_predictions(&pairs, &model.labels))
}

/// Mean raw KL attention loss of `model` over instances with a ground truth.
pub fn mean_attention_loss(model: &AttnLstm, instances: &[RelationInstance]) -> Result<f64> {
    let losses: Vec<Option<f64>> = instances
        .par_iter()
        .map(|inst| -> Result<Option<f64>> {
            match crate::corpus::ground_truth_attention(inst) {
                Ok(a) => Ok(Some(loss_attn(&a, &model.evaluate(inst)?.attention)?)),
                Err(_) => Ok(None),
            }
        })
        .collect::<Result<_>>()?;
    let vals: Vec<f64> = losses.into_iter().flatten().collect();
    Ok(if vals.is_empty() { 0.0 } else { vals.iter().sum::<f64>() / vals.len() as f64 })
}

/// Fresh model over `vocab`, with tag tables widened to cover every id in
/// `instances`.
pub fn init_model<'a>(
    instances: impl IntoIterator<Item = &'a RelationInstance>,
    config: &TrainConfig,
    vocab: Vocab,
) -> Result<AttnLstm> {
    config.validate()?;
    let mut model_cfg = config.model.clone();
    for inst in instances {
        model_cfg.pos_vocab = model_cfg.pos_vocab.max(inst.pos_ids.iter().max().map_or(0, |m| m + 1));
        model_cfg.senti_vocab = model_cfg
            .senti_vocab
            .max(inst.senti_ids.iter().max().map_or(0, |m| m + 1));
    }
    AttnLstm::new(model_cfg, config.label_set()?, vocab, config.seed)
}

/// Builds a fresh model with a vocabulary taken from `train_set` and trains it.
pub fn train(
    train_set: &[RelationInstance],
    dev_set: &[RelationInstance],
    config: &TrainConfig,
) -> Result<(AttnLstm, TrainReport)> {
    let model = init_model(train_set.iter().chain(dev_set), config, Vocab::from_instances(train_set))?;
    train_model(model, train_set, dev_set, config)
}

/// Trains an initialized model with per-instance SGD and dev-based early
/// stopping. Returns the best model seen on the dev set.
pub fn train_model(
    mut model: AttnLstm,
    train_set: &[RelationInstance],
    dev_set: &[RelationInstance],
    config: &TrainConfig,
) -> Result<(AttnLstm, TrainReport)> {
    config.validate()?;
    if train_set.is_empty() || dev_set.is_empty() {
        return Err(Error::Config("train and dev sets must be non-empty".into()));
    }
    let labels = model.labels.clone();
    for inst in train_set.iter().chain(dev_set) {
        if labels.class_index(inst.label).is_none() {
            return Err(Error::Config(format!(
                "instance {} has label {:?} outside the task label set",
                inst.id,
                labels.name(inst.label)
            )));
        }
    }
    let mask = if config.mode == Mode::AttnTrained && config.gamma < 1.0 {
        draw_subsample_mask(train_set, config.gamma, config.seed.wrapping_add(0x5eed))?
    } else {
        SubsampleMask::full(train_set)
    };
    let rationales_used = train_set
        .iter()
        .filter(|i| mask.contains(i.id) && i.rationale.is_some())
        .count();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut lr = config.learning_rate;
    let mut best: Option<(AttnLstm, usize, f64)> = None;
    let mut since_best = 0;
    let mut epochs = Vec::new();

    for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut sums = [0.0; 4];
        let mut attn_count = 0usize;
        for &k in &order {
            let inst = &train_set[k];
            let words = model.build_inputs(inst, true, &mut rng);
            let (parts, mut grads) = instance_gradients(&model, inst, &words, config, &mask)?;
            // Probability floors keep the losses finite after the weights
            // blow up, so the gradient norm is checked as well.
            let norm = clip_global_norm(&mut grads, config.clip_norm);
            let losses_finite = [parts.clf, parts.rationale, parts.total, parts.attn.unwrap_or(0.0)]
                .iter()
                .all(|v| v.is_finite());
            if !losses_finite || !norm.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    instance: inst.id,
                    loss: parts.total,
                });
            }
            sums[0] += parts.clf;
            if let Some(a) = parts.attn {
                sums[1] += a;
                attn_count += 1;
            }
            sums[2] += parts.rationale;
            sums[3] += parts.total;
            sgd_step(&mut model.params, &grads, lr);
        }
        let n = train_set.len() as f64;
        let dev_metric = evaluate(&model, dev_set)?.primary_metric();
        epochs.push(EpochStats {
            epoch,
            learning_rate: lr,
            loss_clf: sums[0] / n,
            loss_attn: if attn_count > 0 { sums[1] / attn_count as f64 } else { 0.0 },
            loss_rationale: sums[2] / n,
            loss_total: sums[3] / n,
            dev_metric,
        });
        log_epoch(epochs.last().expect("just pushed"), started);

        let improved = best.as_ref().is_none_or(|(_, _, m)| dev_metric > *m);
        if improved {
            best = Some((model.clone(), epoch, dev_metric));
            since_best = 0;
        } else {
            since_best += 1;
            lr *= config.lr_decay;
        }
        if config.target_metric.is_some_and(|t| dev_metric >= t) || since_best >= config.patience {
            break;
        }
    }
    let (best_model, best_epoch, best_dev_metric) = best.expect("at least one epoch");
    Ok((
        best_model,
        TrainReport {
            mode: config.mode,
            seed: config.seed,
            epochs,
            best_epoch,
            best_dev_metric,
            rationales_used,
            checkpoint: None,
        },
    ))
}

fn log_epoch(stats: &EpochStats, started: Instant) {
    if std::env::var_os("RATT_LOG").is_some() {
        eprintln!(
            "epoch {:>3} lr {:.4} clf {:.4} attn {:.4} r {:.4} dev {:.4} ({:.1?})",
            stats.epoch,
            stats.learning_rate,
            stats.loss_clf,
            stats.loss_attn,
            stats.loss_rationale,
            stats.dev_metric,
            started.elapsed()
        );
    }
}
