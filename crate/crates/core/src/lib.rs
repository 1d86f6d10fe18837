//! Sentiment relation classification with a position-aware attention Bi-LSTM
//! whose attention can be supervised by human rationale spans, plus the
//! tooling to audit that attention.
//!
//! * [`numerics`]: dense tensors and a reverse-mode autodiff tape.
//! * [`corpus`]: relation instances, JSONL ingestion, folds, undersampling,
//!   ground-truth attention, rationale subsampling and a synthetic generator.
//! * [`model`]: the attention Bi-LSTM with a rationale-prediction head.
//! * [`training`]: losses, the SGD loop, early stopping and reports.
//! * [`interpret`]: leave-one-out influence and probes/mass-needed audits.
//! * [`evalstats`]: task metrics, judgment aggregation and rationale sweeps.

pub mod corpus;
pub mod error;
pub mod evalstats;
pub mod interpret;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};

/// Rounds a non-negative count half-up.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}
