use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::RelationInstance;
use crate::error::{Error, Result};
use crate::training::{evaluate, mean_attention_loss, train, Mode, TrainConfig};

/// Result of one (gamma, seed) training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub gamma: f64,
    pub seed: u64,
    /// Test metric (F-score with ∅, accuracy without).
    pub metric: Option<f64>,
    /// Mean raw KL attention loss on the test set.
    pub attn_loss: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaSummary {
    pub gamma: f64,
    pub runs: usize,
    pub metric_mean: f64,
    pub metric_std: f64,
    pub attn_loss_mean: f64,
    pub attn_loss_std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub cells: Vec<SweepCell>,
    pub summary: Vec<GammaSummary>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() < 2 {
        0.0
    } else {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (mean, std)
}

impl SweepTable {
    fn from_cells(cells: Vec<SweepCell>, gammas: &[f64]) -> Self {
        let summary = gammas
            .iter()
            .map(|&gamma| {
                let ok: Vec<&SweepCell> = cells
                    .iter()
                    .filter(|c| c.gamma == gamma && c.error.is_none())
                    .collect();
                let metrics: Vec<f64> = ok.iter().filter_map(|c| c.metric).collect();
                let losses: Vec<f64> = ok.iter().filter_map(|c| c.attn_loss).collect();
                let (metric_mean, metric_std) = mean_std(&metrics);
                let (attn_loss_mean, attn_loss_std) = mean_std(&losses);
                GammaSummary {
                    gamma,
                    runs: ok.len(),
                    metric_mean,
                    metric_std,
                    attn_loss_mean,
                    attn_loss_std,
                }
            })
            .collect();
        Self { cells, summary }
    }

    pub fn summary_for(&self, gamma: f64) -> Option<&GammaSummary> {
        self.summary.iter().find(|s| s.gamma == gamma)
    }

    /// Plot-ready CSV with columns `gamma,seed,metric,attn_loss`. Failed
    /// cells leave the value columns empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "gamma,seed,metric,attn_loss")?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for c in &self.cells {
            writeln!(w, "{},{},{},{}", c.gamma, c.seed, opt(c.metric), opt(c.attn_loss))?;
        }
        Ok(())
    }
}

fn run_cell(
    train_set: &[RelationInstance],
    dev_set: &[RelationInstance],
    test_set: &[RelationInstance],
    base: &TrainConfig,
    gamma: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    let mut cfg = base.clone();
    cfg.seed = seed;
    if gamma == 0.0 {
        cfg.mode = Mode::Baseline;
    } else {
        cfg.mode = Mode::AttnTrained;
        cfg.gamma = gamma;
    }
    let (model, _) = train(train_set, dev_set, &cfg)?;
    let metric = evaluate(&model, test_set)?.primary_metric();
    let attn = mean_attention_loss(&model, test_set)?;
    Ok((metric, attn))
}

/// Trains one model per (gamma, seed) and scores it on `test_set`.
/// `gamma = 0` means no rationales at all, i.e. baseline training. Cells run
/// in parallel; a failing cell is recorded and the sweep continues.
pub fn rationale_sweep(
    train_set: &[RelationInstance],
    dev_set: &[RelationInstance],
    test_set: &[RelationInstance],
    gammas: &[f64],
    seeds: &[u64],
    config: &TrainConfig,
) -> Result<SweepTable> {
    if seeds.is_empty() || gammas.is_empty() {
        return Err(Error::Config("sweep needs at least one gamma and one seed".into()));
    }
    if let Some(g) = gammas.iter().find(|g| !(0.0..=1.0).contains(*g)) {
        return Err(Error::Config(format!("gamma {g} outside [0, 1]")));
    }
    let jobs: Vec<(f64, u64)> = gammas
        .iter()
        .flat_map(|&g| seeds.iter().map(move |&s| (g, s)))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(gamma, seed)| match run_cell(train_set, dev_set, test_set, config, gamma, seed) {
            Ok((metric, attn)) => SweepCell {
                gamma,
                seed,
                metric: Some(metric),
                attn_loss: Some(attn),
                error: None,
            },
            Err(e) => SweepCell {
                gamma,
                seed,
                metric: None,
                attn_loss: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    Ok(SweepTable::from_cells(cells, gammas))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(gamma: f64, seed: u64, metric: f64) -> SweepCell {
        SweepCell {
            gamma,
            seed,
            metric: Some(metric),
            attn_loss: Some(1.0 - metric),
            error: None,
        }
    }

    #[test]
    fn summary_mean_and_sample_std() {
        let mut cells = vec![cell(0.5, 1, 0.2), cell(0.5, 2, 0.4), cell(0.5, 3, 0.6)];
        cells.push(SweepCell {
            error: Some("diverged".into()),
            metric: None,
            attn_loss: None,
            ..cell(1.0, 1, 0.0)
        });
        let t = SweepTable::from_cells(cells, &[0.5, 1.0]);
        let s = t.summary_for(0.5).unwrap();
        assert!((s.metric_mean - 0.4).abs() < 1e-12);
        assert!((s.metric_std - 0.2).abs() < 1e-12);
        assert_eq!(t.summary_for(1.0).unwrap().runs, 0);

        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("gamma,seed,metric,attn_loss\n0.5,1,0.2,0.8\n"));
        assert!(text.ends_with("1,1,,\n"));
    }

    #[test]
    fn rejects_bad_grid() {
        let cfg = TrainConfig::default();
        assert!(rationale_sweep(&[], &[], &[], &[0.5], &[], &cfg).is_err());
        assert!(rationale_sweep(&[], &[], &[], &[1.5], &[1], &cfg).is_err());
    }
}
