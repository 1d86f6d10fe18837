use std::collections::BTreeSet;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RelationInstance;
use crate::error::{Error, Result};
use crate::round_half_up;

/// Keeps every relation instance and a random subset of ∅ instances of size
/// `round(ratio * #relations)` (capped at the available ∅ count). Input
/// order is preserved.
pub fn undersample(instances: &[RelationInstance], ratio: f64, seed: u64) -> Result<Vec<RelationInstance>> {
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(Error::Config(format!("undersampling ratio must be positive, got {ratio}")));
    }
    let nulls: Vec<usize> = (0..instances.len()).filter(|&i| instances[i].is_null()).collect();
    let relations = instances.len() - nulls.len();
    let keep_n = round_half_up(ratio * relations as f64).min(nulls.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kept: BTreeSet<usize> = index::sample(&mut rng, nulls.len(), keep_n)
        .into_iter()
        .map(|k| nulls[k])
        .collect();
    Ok(instances
        .iter()
        .enumerate()
        .filter(|(i, inst)| !inst.is_null() || kept.contains(i))
        .map(|(_, inst)| inst.clone())
        .collect())
}

/// The set of relation instances whose rationales are used when only a
/// `gamma` fraction of rationales is available.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsampleMask {
    pub gamma: f64,
    pub member_ids: BTreeSet<usize>,
    pub seed: u64,
}

impl SubsampleMask {
    /// The mask that keeps every rationale.
    pub fn full(instances: &[RelationInstance]) -> Self {
        Self {
            gamma: 1.0,
            member_ids: instances.iter().filter(|i| !i.is_null()).map(|i| i.id).collect(),
            seed: 0,
        }
    }

    pub fn contains(&self, id: usize) -> bool {
        self.member_ids.contains(&id)
    }
}

/// Uniform sample without replacement of `round(gamma * #relations)`
/// relation-instance ids.
pub fn draw_subsample_mask(instances: &[RelationInstance], gamma: f64, seed: u64) -> Result<SubsampleMask> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Config(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    let ids: Vec<usize> = instances.iter().filter(|i| !i.is_null()).map(|i| i.id).collect();
    let k = round_half_up(gamma * ids.len() as f64).min(ids.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let member_ids = index::sample(&mut rng, ids.len(), k)
        .into_iter()
        .map(|j| ids[j])
        .collect();
    Ok(SubsampleMask {
        gamma,
        member_ids,
        seed,
    })
}
