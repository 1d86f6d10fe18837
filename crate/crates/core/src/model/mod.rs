//! Position-aware attention Bi-LSTM relation classifier.
//!
//! Inputs are the concatenation of word, POS-tag and sentiment-class
//! embeddings. Words inside the source and target mentions are replaced by
//! two trainable mask vectors. A Bi-LSTM produces `h_i`; attention logits are
//! `u_i = v . tanh(W_h h_i + W_q h_q + W_s p_i^s + W_t p_i^t)` where `p^s`,
//! `p^t` are rows of a shared displacement embedding and `h_q` concatenates
//! the final states of both directions. The attention-weighted sum of `h_i`
//! feeds a softmax classifier. A sigmoid head over `e_i` predicts rationale
//! membership per token.

mod checkpoint;
mod params;

use rand::Rng;

pub use checkpoint::Checkpoint;
pub use params::{ModelConfig, ModelParams, ParamGroup};

use crate::corpus::{LabelSet, RelationInstance, Span, Vocab, UNK_ID};
use crate::error::{Error, Result};
use crate::numerics::{lstm_step, Gradients, Graph, LstmWeights, NodeId, Tensor};

/// Signed distance of position `i` from `span`, as written:
/// `min(i - start, 0) + max(0, i - end)`. Note that `i == end` yields 0.
pub fn displacement(i: usize, span: Span) -> i64 {
    let (i, s, e) = (i as i64, span.start as i64, span.end as i64);
    (i - s).min(0) + (i - e).max(0)
}

/// What feeds the word channel at one position.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WordInput {
    Token(usize),
    SourceMask,
    TargetMask,
}

/// Outputs of one forward pass, as plain values.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardResult {
    /// Label distribution.
    pub y: Vec<f64>,
    /// Attention distribution over positions.
    pub attention: Vec<f64>,
    /// Per-token rationale probabilities.
    pub rationale_probs: Vec<f64>,
    /// Concatenated Bi-LSTM states.
    pub hidden: Vec<Vec<f64>>,
    /// Concatenated final states of the two directions.
    pub query: Vec<f64>,
}

/// Graph handles of a forward pass.
pub struct ForwardNodes {
    pub params: Vec<NodeId>,
    pub y: NodeId,
    pub attention: NodeId,
    pub rationale_probs: NodeId,
    pub hidden: Vec<NodeId>,
    pub query: NodeId,
}

impl ForwardNodes {
    pub fn result(&self, g: &Graph<'_>) -> ForwardResult {
        ForwardResult {
            y: g.value(self.y).data().to_vec(),
            attention: g.value(self.attention).data().to_vec(),
            rationale_probs: g.value(self.rationale_probs).data().to_vec(),
            hidden: self.hidden.iter().map(|&h| g.value(h).data().to_vec()).collect(),
            query: g.value(self.query).data().to_vec(),
        }
    }

    pub fn param(&self, group: ParamGroup) -> NodeId {
        self.params[group as usize]
    }

    /// Gradients of every parameter group, zero-filled where unused.
    pub fn param_grads(&self, grads: &mut Gradients, params: &ModelParams) -> ParamGrads {
        ParamGrads {
            grads: ParamGroup::ALL
                .iter()
                .map(|&pg| {
                    grads
                        .take(self.param(pg))
                        .unwrap_or_else(|| Tensor::zeros_like(&params[pg]))
                })
                .collect(),
        }
    }
}

/// Per-group parameter gradients.
#[derive(Clone, Debug)]
pub struct ParamGrads {
    grads: Vec<Tensor>,
}

impl ParamGrads {
    pub fn get(&self, g: ParamGroup) -> &Tensor {
        &self.grads[g as usize]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamGroup, &Tensor)> {
        ParamGroup::ALL.into_iter().zip(&self.grads)
    }

    pub fn sq_norm(&self) -> f64 {
        self.grads.iter().map(Tensor::sq_norm).sum()
    }

    pub fn scale(&mut self, alpha: f64) {
        for g in &mut self.grads {
            g.scale(alpha);
        }
    }
}

/// A classifier: configuration, label inventory, vocabulary and weights.
#[derive(Clone, Debug, PartialEq)]
pub struct AttnLstm {
    pub config: ModelConfig,
    pub labels: LabelSet,
    pub vocab: Vocab,
    pub params: ModelParams,
}

impl AttnLstm {
    pub fn new(config: ModelConfig, labels: LabelSet, vocab: Vocab, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = ModelParams::init(&config, vocab.len(), labels.num_classes(), seed);
        Ok(Self {
            config,
            labels,
            vocab,
            params,
        })
    }

    /// Overwrites the word embedding table with pretrained rows.
    pub fn set_word_embeddings(&mut self, rows: &[Vec<f64>]) -> Result<()> {
        let table = &mut self.params[ParamGroup::WordEmbedding];
        if rows.len() != table.rows() || rows.iter().any(|r| r.len() != table.cols()) {
            return Err(Error::dim(
                "set_word_embeddings",
                format!("expected {:?}", table.shape()),
            ));
        }
        for (i, r) in rows.iter().enumerate() {
            table.row_mut(i).copy_from_slice(r);
        }
        Ok(())
    }

    fn position_row(&self, i: usize, span: Span) -> usize {
        let l = self.config.max_displacement as i64;
        (displacement(i, span).clamp(-l, l) + l) as usize
    }

    /// Word-channel inputs: mask vectors over the mentions (source wins on
    /// overlap), vocabulary rows elsewhere, and in training mode each
    /// remaining position independently dropped to UNK.
    pub fn build_inputs<R: Rng + ?Sized>(
        &self,
        inst: &RelationInstance,
        train_mode: bool,
        rng: &mut R,
    ) -> Vec<WordInput> {
        (0..inst.len())
            .map(|i| {
                if inst.source.contains(i) {
                    WordInput::SourceMask
                } else if inst.target.contains(i) {
                    WordInput::TargetMask
                } else if train_mode
                    && self.config.word_dropout > 0.0
                    && rng.gen_bool(self.config.word_dropout)
                {
                    WordInput::Token(UNK_ID)
                } else {
                    WordInput::Token(self.vocab.id(&inst.tokens[i]))
                }
            })
            .collect()
    }

    /// Evaluation-mode word inputs.
    pub fn eval_inputs(&self, inst: &RelationInstance) -> Vec<WordInput> {
        self.build_inputs(inst, false, &mut rand::rngs::mock::StepRng::new(0, 0))
    }

    /// Input vectors `x_i` as plain values (for inspection and tests).
    pub fn input_vectors(&self, inst: &RelationInstance, words: &[WordInput]) -> Result<Vec<Vec<f64>>> {
        let mut g = Graph::new();
        let p = self.param_nodes(&mut g);
        let xs = self.input_nodes(&mut g, &p, inst, words)?;
        Ok(xs.iter().map(|&x| g.value(x).data().to_vec()).collect())
    }

    fn param_nodes<'a>(&'a self, g: &mut Graph<'a>) -> Vec<NodeId> {
        self.params.iter().map(|(_, t)| g.param(t)).collect()
    }

    fn input_nodes(
        &self,
        g: &mut Graph<'_>,
        p: &[NodeId],
        inst: &RelationInstance,
        words: &[WordInput],
    ) -> Result<Vec<NodeId>> {
        let n = inst.len();
        if words.len() != n || inst.pos_ids.len() != n || inst.senti_ids.len() != n {
            return Err(Error::Contract(format!(
                "instance {}: channel lengths disagree with {n} tokens",
                inst.id
            )));
        }
        let pnode = |grp: ParamGroup| p[grp as usize];
        (0..n)
            .map(|i| {
                let word = match words[i] {
                    WordInput::Token(id) => g.row(pnode(ParamGroup::WordEmbedding), id),
                    WordInput::SourceMask => Ok(pnode(ParamGroup::SourceMask)),
                    WordInput::TargetMask => Ok(pnode(ParamGroup::TargetMask)),
                }
                .map_err(|_| Error::Contract(format!("word id out of vocabulary at position {i}")))?;
                let pos = g
                    .row(pnode(ParamGroup::PosEmbedding), inst.pos_ids[i])
                    .map_err(|_| Error::Contract(format!("pos id {} out of range", inst.pos_ids[i])))?;
                let senti = g
                    .row(pnode(ParamGroup::SentiEmbedding), inst.senti_ids[i])
                    .map_err(|_| Error::Contract(format!("senti id {} out of range", inst.senti_ids[i])))?;
                g.concat(&[word, pos, senti])
            })
            .collect()
    }

    /// Builds the forward computation on `g` with explicit word inputs.
    pub fn forward_graph<'a>(
        &'a self,
        g: &mut Graph<'a>,
        inst: &RelationInstance,
        words: &[WordInput],
    ) -> Result<ForwardNodes> {
        let n = inst.len();
        if n == 0 {
            return Err(Error::Contract("empty sentence".into()));
        }
        let p = self.param_nodes(g);
        let pn = |grp: ParamGroup| p[grp as usize];
        let xs = self.input_nodes(g, &p, inst, words)?;

        let d = self.config.hidden;
        let run = |g: &mut Graph<'a>, w: LstmWeights, order: &mut dyn Iterator<Item = usize>| -> Result<Vec<NodeId>> {
            let mut h = g.constant(Tensor::zeros(&[d]));
            let mut c = g.constant(Tensor::zeros(&[d]));
            let mut out = vec![h; n];
            for i in order {
                (h, c) = lstm_step(g, xs[i], h, c, &w)?;
                out[i] = h;
            }
            Ok(out)
        };
        let fwd_w = LstmWeights {
            w_ih: pn(ParamGroup::FwdInput),
            w_hh: pn(ParamGroup::FwdRecurrent),
            bias: pn(ParamGroup::FwdBias),
        };
        let bwd_w = LstmWeights {
            w_ih: pn(ParamGroup::BwdInput),
            w_hh: pn(ParamGroup::BwdRecurrent),
            bias: pn(ParamGroup::BwdBias),
        };
        let fwd = run(g, fwd_w, &mut (0..n))?;
        let bwd = run(g, bwd_w, &mut (0..n).rev())?;
        let hidden: Vec<NodeId> = (0..n)
            .map(|i| g.concat(&[fwd[i], bwd[i]]))
            .collect::<Result<_>>()?;
        let query = g.concat(&[fwd[n - 1], bwd[0]])?;

        let q_proj = g.matvec(pn(ParamGroup::AttnQuery), query)?;
        let mut logits = Vec::with_capacity(n);
        let mut rationale_logits = Vec::with_capacity(n);
        for (i, &h) in hidden.iter().enumerate() {
            let ps = g.row(pn(ParamGroup::PositionEmbedding), self.position_row(i, inst.source))?;
            let pt = g.row(pn(ParamGroup::PositionEmbedding), self.position_row(i, inst.target))?;
            let a = g.matvec(pn(ParamGroup::AttnHidden), h)?;
            let s = g.matvec(pn(ParamGroup::AttnSource), ps)?;
            let t = g.matvec(pn(ParamGroup::AttnTarget), pt)?;
            let pre = g.sum(&[a, q_proj, s, t])?;
            let e = g.tanh(pre);
            logits.push(g.dot(pn(ParamGroup::AttnVector), e)?);
            rationale_logits.push(g.dot(pn(ParamGroup::RationaleHead), e)?);
        }
        let u = g.concat(&logits)?;
        let attention = g.softmax(u)?;
        let z = g.weighted_sum(attention, &hidden)?;
        let scores = g.matvec(pn(ParamGroup::Classifier), z)?;
        let y = g.softmax(scores)?;
        let r = g.concat(&rationale_logits)?;
        let rationale_probs = g.sigmoid(r);
        Ok(ForwardNodes {
            params: p,
            y,
            attention,
            rationale_probs,
            hidden,
            query,
        })
    }

    /// One forward pass. `train_mode` enables word dropout drawn from `rng`.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        inst: &RelationInstance,
        train_mode: bool,
        rng: &mut R,
    ) -> Result<ForwardResult> {
        let words = self.build_inputs(inst, train_mode, rng);
        self.forward_words(inst, &words)
    }

    pub fn forward_words(&self, inst: &RelationInstance, words: &[WordInput]) -> Result<ForwardResult> {
        let mut g = Graph::new();
        let nodes = self.forward_graph(&mut g, inst, words)?;
        Ok(nodes.result(&g))
    }

    /// Evaluation-mode forward pass.
    pub fn evaluate(&self, inst: &RelationInstance) -> Result<ForwardResult> {
        self.forward_words(inst, &self.eval_inputs(inst))
    }

    /// Predicted class index and its probability.
    pub fn predict(&self, inst: &RelationInstance) -> Result<(usize, f64)> {
        Ok(argmax_first(&self.evaluate(inst)?.y))
    }
}

/// Index and value of the first maximum.
pub fn argmax_first(v: &[f64]) -> (usize, f64) {
    let mut best = (0, v[0]);
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > best.1 {
            best = (i, x);
        }
    }
    best
}
