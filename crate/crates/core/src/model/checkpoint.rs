use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AttnLstm, ModelConfig, ModelParams};
use crate::corpus::{LabelSet, Vocab};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

const FORMAT: &str = "ratt-checkpoint";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// JSON checkpoint container: configuration echo, label set, vocabulary and
/// every parameter tensor with its shape header.
#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    format: String,
    version: u32,
    pub seed: u64,
    pub config: ModelConfig,
    pub labels: LabelSet,
    pub vocab: Vocab,
    tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn from_model(model: &AttnLstm, seed: u64) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            seed,
            config: model.config.clone(),
            labels: model.labels.clone(),
            vocab: model.vocab.clone(),
            tensors: model
                .params
                .iter()
                .map(|(g, t)| NamedTensor {
                    name: g.name().into(),
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn into_model(self) -> Result<AttnLstm> {
        if self.format != FORMAT || self.version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported container {:?} v{}",
                self.format, self.version
            )));
        }
        self.config.validate()?;
        let named = self
            .tensors
            .into_iter()
            .map(|nt| {
                let t = Tensor::new(nt.shape, nt.data)
                    .map_err(|e| Error::Checkpoint(format!("tensor {:?}: {e}", nt.name)))?;
                Ok((nt.name, t))
            })
            .collect::<Result<Vec<_>>>()?;
        let params = ModelParams::from_named(
            &self.config,
            self.vocab.len(),
            self.labels.num_classes(),
            named,
        )?;
        Ok(AttnLstm {
            config: self.config,
            labels: self.labels,
            vocab: self.vocab,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let r = BufReader::new(File::open(path)?);
        Ok(serde_json::from_reader(r)?)
    }
}

impl AttnLstm {
    pub fn save(&self, path: impl AsRef<Path>, seed: u64) -> Result<()> {
        Checkpoint::from_model(self, seed).save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Checkpoint::load(path)?.into_model()
    }
}
