#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use ratt_core::corpus::{
    generate_synthetic, Label, LabelSet, RelationInstance, Span, SubsampleMask, SyntheticConfig, Vocab,
};
use ratt_core::model::{AttnLstm, ModelConfig, ParamGroup};
use ratt_core::training::{instance_gradients, total_loss, Mode, TrainConfig};

pub fn small_model_config() -> ModelConfig {
    ModelConfig {
        d_word: 4,
        d_pos: 3,
        d_senti: 2,
        d_position: 3,
        hidden: 4,
        d_attn: 3,
        max_displacement: 6,
        pos_vocab: 5,
        senti_vocab: 3,
        word_dropout: 0.06,
        init_scale: 0.5,
    }
}

/// A random instance of `n` tokens over a 6-word vocabulary `w0..w5`. Labels
/// are drawn from the 2-relation + ∅ set; relations get a random rationale.
pub fn random_instance(rng: &mut ChaCha8Rng, id: usize, n: usize) -> RelationInstance {
    let tokens: Vec<String> = (0..n).map(|_| format!("w{}", rng.gen_range(0..6))).collect();
    let span = |rng: &mut ChaCha8Rng| {
        let s = rng.gen_range(0..n);
        let e = rng.gen_range(s + 1..=n.min(s + 2));
        Span::new(s, e)
    };
    let source = span(rng);
    let target = span(rng);
    let label = match rng.gen_range(0..3) {
        0 => Label::Null,
        k => Label::Relation(k - 1),
    };
    let rationale = (!label.is_null()).then(|| span(rng));
    RelationInstance {
        id,
        doc_id: format!("d{id}"),
        pos_ids: (0..n).map(|_| rng.gen_range(0..5)).collect(),
        senti_ids: (0..n).map(|_| rng.gen_range(0..3)).collect(),
        tokens,
        source,
        target,
        rationale,
        label,
    }
}

pub fn labels() -> LabelSet {
    LabelSet::new(["positive", "negative"], true).unwrap()
}

pub fn small_model(seed: u64) -> AttnLstm {
    let mut vocab = Vocab::empty();
    for k in 0..6 {
        vocab.insert(&format!("w{k}"));
    }
    AttnLstm::new(small_model_config(), labels(), vocab, seed).unwrap()
}

pub fn mode_config(mode: Mode) -> TrainConfig {
    TrainConfig {
        mode,
        lambda_attn: 0.7,
        lambda_r: 0.4,
        model: small_model_config(),
        ..TrainConfig::default()
    }
}

/// `|a - n| / max(|a|, |n|, 1e-6)`. The floor keeps entries whose true
/// gradient is near zero from being judged on central-difference roundoff
/// (about `eps / h`, i.e. 1e-11 at `h = 1e-5`).
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Largest relative error between analytic and central-difference gradients
/// for `group`, over at most `max_entries` entries (evenly spaced).
pub fn gradient_error(
    model: &AttnLstm,
    inst: &RelationInstance,
    config: &TrainConfig,
    mask: &SubsampleMask,
    group: ParamGroup,
    max_entries: usize,
    h: f64,
) -> f64 {
    let words = model.eval_inputs(inst);
    let (_, grads) = instance_gradients(model, inst, &words, config, mask).unwrap();
    let analytic = grads.get(group).data().to_vec();
    let size = analytic.len();
    let step = (size / max_entries).max(1);
    let loss_at = |m: &AttnLstm| {
        let fr = m.forward_words(inst, &words).unwrap();
        total_loss(inst, &fr, &m.labels, config, mask).unwrap().total
    };
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for k in (0..size).step_by(step) {
        let orig = probe.params[group].data()[k];
        probe.params[group].data_mut()[k] = orig + h;
        let up = loss_at(&probe);
        probe.params[group].data_mut()[k] = orig - h;
        let down = loss_at(&probe);
        probe.params[group].data_mut()[k] = orig;
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max(relative_error(analytic[k], numeric));
    }
    worst
}

pub fn synthetic(instances: usize, seed: u64) -> (SyntheticConfig, Vec<RelationInstance>) {
    let cfg = SyntheticConfig {
        instances,
        ..SyntheticConfig::default()
    };
    let (_, data) = generate_synthetic(&cfg, seed).unwrap();
    (cfg, data)
}

/// Small but capable configuration for desk-scale training runs.
pub fn desk_train_config(mode: Mode, seed: u64) -> TrainConfig {
    TrainConfig {
        mode,
        seed,
        learning_rate: 0.1,
        max_epochs: 12,
        patience: 15,
        model: ModelConfig {
            d_word: 16,
            d_pos: 4,
            d_senti: 2,
            d_position: 8,
            hidden: 16,
            d_attn: 16,
            ..ModelConfig::default()
        },
        ..TrainConfig::default()
    }
}

/// Sort-and-scan reference for probes-needed and mass-needed: walk tokens in
/// descending weight order and stop at the first one not heavier than the
/// target. Mass is accumulated in index order so dyadic inputs compare
/// bit-exactly.
pub fn rank_oracle(attention: &[f64], target: usize) -> (usize, f64) {
    let mut order: Vec<usize> = (0..attention.len()).collect();
    order.sort_by(|&a, &b| attention[b].partial_cmp(&attention[a]).unwrap().then(a.cmp(&b)));
    let t = attention[target];
    let heavier: Vec<usize> = order.iter().copied().take_while(|&j| attention[j] > t).collect();
    let mut in_index_order = heavier.clone();
    in_index_order.sort_unstable();
    let mass = in_index_order.iter().map(|&j| attention[j]).sum();
    (heavier.len() + 1, mass)
}

/// Attention vector of dyadic weights `c_i / 2^bits` summing to 1, with
/// frequent ties.
pub fn dyadic_attention(rng: &mut ChaCha8Rng, len: usize, bits: u32) -> Vec<f64> {
    let total = 1u64 << bits;
    let mut cuts: Vec<u64> = (0..len - 1).map(|_| rng.gen_range(0..=total)).collect();
    cuts.push(0);
    cuts.push(total);
    cuts.sort_unstable();
    cuts.windows(2).map(|w| (w[1] - w[0]) as f64 / total as f64).collect()
}

pub struct ConfusionOracle {
    /// `m[gold][pred]` over class indices; ∅ is the last class.
    pub m: Vec<Vec<usize>>,
    pub null: Option<usize>,
}

impl ConfusionOracle {
    pub fn new(pairs: &[(Label, Label)], labels: &LabelSet) -> Self {
        let k = labels.num_classes();
        let mut m = vec![vec![0; k]; k];
        for &(g, p) in pairs {
            m[labels.class_index(g).unwrap()][labels.class_index(p).unwrap()] += 1;
        }
        let null = labels.class_index(Label::Null);
        Self { m, null }
    }

    fn div(a: usize, b: usize) -> f64 {
        if b == 0 {
            0.0
        } else {
            a as f64 / b as f64
        }
    }

    fn f(p: f64, r: f64) -> f64 {
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    /// Micro (P, R, F, accuracy).
    pub fn micro(&self) -> (f64, f64, f64, f64) {
        let k = self.m.len();
        let rel: Vec<usize> = (0..k).filter(|&c| Some(c) != self.null).collect();
        let diag: usize = rel.iter().map(|&c| self.m[c][c]).sum();
        let pred: usize = rel.iter().map(|&c| (0..k).map(|g| self.m[g][c]).sum::<usize>()).sum();
        let gold: usize = rel.iter().map(|&c| self.m[c].iter().sum::<usize>()).sum();
        let all: usize = self.m.iter().flatten().sum();
        let correct: usize = (0..k).map(|c| self.m[c][c]).sum();
        let (p, r) = (Self::div(diag, pred), Self::div(diag, gold));
        (p, r, Self::f(p, r), Self::div(correct, all))
    }

    /// One-vs-rest (P, R, F) of relation class `c`.
    pub fn per_class(&self, c: usize) -> (f64, f64, f64) {
        let k = self.m.len();
        let tp = self.m[c][c];
        let p = Self::div(tp, (0..k).map(|g| self.m[g][c]).sum());
        let r = Self::div(tp, self.m[c].iter().sum());
        (p, r, Self::f(p, r))
    }
}

pub fn random_label(rng: &mut ChaCha8Rng, labels: &LabelSet) -> Label {
    labels.label_of_class(rng.gen_range(0..labels.num_classes())).unwrap()
}

/// Exact binomial two-sided sign test with big-integer-free rational
/// arithmetic (valid for n <= 60).
pub fn exact_sign_test(k: usize, n: usize) -> f64 {
    let m = k.min(n - k);
    let mut c: u128 = 1;
    let mut tail: u128 = 0;
    for i in 0..=m {
        if i > 0 {
            c = c * (n - i + 1) as u128 / i as u128;
        }
        tail += c;
    }
    (2.0 * tail as f64 / 2f64.powi(n as i32)).min(1.0)
}
