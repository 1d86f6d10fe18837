use std::ops::{Index, IndexMut};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Layer sizes and input-channel settings of the classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_word: usize,
    pub d_pos: usize,
    pub d_senti: usize,
    /// Width of the shared position (displacement) embedding.
    pub d_position: usize,
    /// Hidden size of each LSTM direction.
    pub hidden: usize,
    /// Width of the attention latent `e_i`.
    pub d_attn: usize,
    /// Displacements are clamped to `[-max_displacement, max_displacement]`.
    pub max_displacement: usize,
    pub pos_vocab: usize,
    pub senti_vocab: usize,
    /// Probability of replacing a word with UNK during training.
    pub word_dropout: f64,
    pub init_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_word: 50,
            d_pos: 10,
            d_senti: 10,
            d_position: 35,
            hidden: 140,
            d_attn: 50,
            max_displacement: 100,
            pos_vocab: 64,
            senti_vocab: 8,
            word_dropout: 0.06,
            init_scale: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn input_width(&self) -> usize {
        self.d_word + self.d_pos + self.d_senti
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.d_word,
            self.d_pos,
            self.d_senti,
            self.d_position,
            self.hidden,
            self.d_attn,
            self.pos_vocab,
            self.senti_vocab,
        ];
        if dims.contains(&0) {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.word_dropout) {
            return Err(Error::Config(format!("word_dropout {} outside [0, 1)", self.word_dropout)));
        }
        Ok(())
    }
}

/// Named parameter groups of the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamGroup {
    WordEmbedding,
    PosEmbedding,
    SentiEmbedding,
    PositionEmbedding,
    SourceMask,
    TargetMask,
    FwdInput,
    FwdRecurrent,
    FwdBias,
    BwdInput,
    BwdRecurrent,
    BwdBias,
    AttnHidden,
    AttnQuery,
    AttnSource,
    AttnTarget,
    AttnVector,
    Classifier,
    RationaleHead,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 19] = [
        ParamGroup::WordEmbedding,
        ParamGroup::PosEmbedding,
        ParamGroup::SentiEmbedding,
        ParamGroup::PositionEmbedding,
        ParamGroup::SourceMask,
        ParamGroup::TargetMask,
        ParamGroup::FwdInput,
        ParamGroup::FwdRecurrent,
        ParamGroup::FwdBias,
        ParamGroup::BwdInput,
        ParamGroup::BwdRecurrent,
        ParamGroup::BwdBias,
        ParamGroup::AttnHidden,
        ParamGroup::AttnQuery,
        ParamGroup::AttnSource,
        ParamGroup::AttnTarget,
        ParamGroup::AttnVector,
        ParamGroup::Classifier,
        ParamGroup::RationaleHead,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::WordEmbedding => "word_embedding",
            ParamGroup::PosEmbedding => "pos_embedding",
            ParamGroup::SentiEmbedding => "senti_embedding",
            ParamGroup::PositionEmbedding => "position_embedding",
            ParamGroup::SourceMask => "source_mask",
            ParamGroup::TargetMask => "target_mask",
            ParamGroup::FwdInput => "lstm_fwd_w_ih",
            ParamGroup::FwdRecurrent => "lstm_fwd_w_hh",
            ParamGroup::FwdBias => "lstm_fwd_bias",
            ParamGroup::BwdInput => "lstm_bwd_w_ih",
            ParamGroup::BwdRecurrent => "lstm_bwd_w_hh",
            ParamGroup::BwdBias => "lstm_bwd_bias",
            ParamGroup::AttnHidden => "attn_w_h",
            ParamGroup::AttnQuery => "attn_w_q",
            ParamGroup::AttnSource => "attn_w_s",
            ParamGroup::AttnTarget => "attn_w_t",
            ParamGroup::AttnVector => "attn_v",
            ParamGroup::Classifier => "classifier_w_z",
            ParamGroup::RationaleHead => "rationale_fc_r",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.name() == name)
    }

    /// Expected shape given the configuration, vocabulary size and class count.
    pub fn shape(self, cfg: &ModelConfig, vocab: usize, classes: usize) -> Vec<usize> {
        let d = cfg.hidden;
        match self {
            ParamGroup::WordEmbedding => vec![vocab, cfg.d_word],
            ParamGroup::PosEmbedding => vec![cfg.pos_vocab, cfg.d_pos],
            ParamGroup::SentiEmbedding => vec![cfg.senti_vocab, cfg.d_senti],
            ParamGroup::PositionEmbedding => vec![2 * cfg.max_displacement + 1, cfg.d_position],
            ParamGroup::SourceMask | ParamGroup::TargetMask => vec![cfg.d_word],
            ParamGroup::FwdInput | ParamGroup::BwdInput => vec![4 * d, cfg.input_width()],
            ParamGroup::FwdRecurrent | ParamGroup::BwdRecurrent => vec![4 * d, d],
            ParamGroup::FwdBias | ParamGroup::BwdBias => vec![4 * d],
            ParamGroup::AttnHidden | ParamGroup::AttnQuery => vec![cfg.d_attn, 2 * d],
            ParamGroup::AttnSource | ParamGroup::AttnTarget => vec![cfg.d_attn, cfg.d_position],
            ParamGroup::AttnVector | ParamGroup::RationaleHead => vec![cfg.d_attn],
            ParamGroup::Classifier => vec![classes, 2 * d],
        }
    }

    fn is_bias(self) -> bool {
        matches!(self, ParamGroup::FwdBias | ParamGroup::BwdBias)
    }
}

/// All trainable tensors, indexed by [`ParamGroup`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    tensors: Vec<Tensor>,
}

impl ModelParams {
    /// Uniform `±init_scale` initialization; LSTM biases start at zero.
    pub fn init(cfg: &ModelConfig, vocab: usize, classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = ParamGroup::ALL
            .iter()
            .map(|&g| {
                let shape = g.shape(cfg, vocab, classes);
                let n = shape.iter().product();
                let data = if g.is_bias() {
                    vec![0.0; n]
                } else {
                    (0..n).map(|_| rng.gen_range(-cfg.init_scale..cfg.init_scale)).collect()
                };
                Tensor::new(shape, data).expect("shape from config")
            })
            .collect();
        Self { tensors }
    }

    /// Builds parameters from named tensors, checking every expected group
    /// is present with the expected shape.
    pub fn from_named(
        cfg: &ModelConfig,
        vocab: usize,
        classes: usize,
        named: impl IntoIterator<Item = (String, Tensor)>,
    ) -> Result<Self> {
        let mut slots: Vec<Option<Tensor>> = vec![None; ParamGroup::ALL.len()];
        for (name, t) in named {
            let g = ParamGroup::from_name(&name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown tensor {name:?}")))?;
            let want = g.shape(cfg, vocab, classes);
            if t.shape() != want.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name:?} has shape {:?}, expected {want:?}",
                    t.shape()
                )));
            }
            slots[g as usize] = Some(t);
        }
        let tensors = slots
            .into_iter()
            .zip(ParamGroup::ALL)
            .map(|(t, g)| t.ok_or_else(|| Error::Checkpoint(format!("missing tensor {:?}", g.name()))))
            .collect::<Result<_>>()?;
        Ok(Self { tensors })
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamGroup, &Tensor)> {
        ParamGroup::ALL.into_iter().zip(&self.tensors)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamGroup, &mut Tensor)> {
        ParamGroup::ALL.into_iter().zip(self.tensors.iter_mut())
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }
}

impl Index<ParamGroup> for ModelParams {
    type Output = Tensor;

    fn index(&self, g: ParamGroup) -> &Tensor {
        &self.tensors[g as usize]
    }
}

impl IndexMut<ParamGroup> for ModelParams {
    fn index_mut(&mut self, g: ParamGroup) -> &mut Tensor {
        &mut self.tensors[g as usize]
    }
}
