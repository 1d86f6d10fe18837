use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::RelationInstance;
use crate::error::{Error, Result};
use crate::round_half_up;

pub const FOLD_COUNT: usize = 5;
const HELDOUT_FRACTION: f64 = 0.10;
const DEV_FRACTION: f64 = 0.15;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
}

/// Document-level cross-validation plan: a fixed held-out set plus five
/// train/dev/test partitions (65/15/20) of the remaining pool.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
    pub heldout: Vec<String>,
}

impl Fold {
    /// Splits `instances` into (train, dev, test) by document id. Instances
    /// from documents outside the fold are dropped.
    pub fn select(
        &self,
        instances: &[RelationInstance],
    ) -> (Vec<RelationInstance>, Vec<RelationInstance>, Vec<RelationInstance>) {
        let pick = |docs: &[String]| {
            let set: BTreeSet<&str> = docs.iter().map(String::as_str).collect();
            instances
                .iter()
                .filter(|i| set.contains(i.doc_id.as_str()))
                .cloned()
                .collect::<Vec<_>>()
        };
        (pick(&self.train), pick(&self.dev), pick(&self.test))
    }
}

impl FoldPlan {
    pub fn fold_count(&self) -> usize {
        self.folds.len()
    }
}

/// Splits documents into folds. Duplicate ids are collapsed; the plan only
/// depends on the set of ids and the seed.
///
/// The held-out set takes `round(0.1 n)` documents. Test sets are the five
/// contiguous fifths of the shuffled pool; each fold's dev set takes the
/// `round(0.15 m)` pool documents following its test block (cyclically) and
/// train keeps the remainder.
pub fn make_folds<S: AsRef<str>>(doc_ids: &[S], seed: u64) -> Result<FoldPlan> {
    let unique: BTreeSet<&str> = doc_ids.iter().map(AsRef::as_ref).collect();
    let n = unique.len();
    if n < 10 {
        return Err(Error::Config(format!(
            "fold plan needs at least 10 documents, got {n}"
        )));
    }
    let mut docs: Vec<String> = unique.into_iter().map(str::to_owned).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    docs.shuffle(&mut rng);

    let heldout_n = round_half_up(HELDOUT_FRACTION * n as f64);
    let pool = docs.split_off(heldout_n);
    let heldout = docs;
    let m = pool.len();
    let dev_n = round_half_up(DEV_FRACTION * m as f64);
    let bound = |k: usize| round_half_up((k * m) as f64 / FOLD_COUNT as f64);

    let folds = (0..FOLD_COUNT)
        .map(|k| {
            let (lo, hi) = (bound(k), bound(k + 1));
            let test = pool[lo..hi].to_vec();
            let dev = (0..dev_n).map(|j| pool[(hi + j) % m].clone()).collect();
            let mut train = Vec::with_capacity(m);
            // Indices cyclically after the dev block, up to the test block.
            for j in dev_n..m - (hi - lo) {
                train.push(pool[(hi + j) % m].clone());
            }
            Fold { train, dev, test }
        })
        .collect();
    Ok(FoldPlan { folds, heldout })
}
