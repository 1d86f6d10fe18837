use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preference {
    A,
    B,
    Draw,
}

/// One pairwise plausibility verdict on two systems' attention for the same
/// instance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentRecord {
    pub instance_id: usize,
    pub system_a_sensible: bool,
    pub system_b_sensible: bool,
    /// Required when both are sensible; optional (and must name the
    /// sensible side) when exactly one is; absent when neither is.
    pub preferred: Option<Preference>,
    /// How strongly the preferred side wins, 1 to 3.
    #[serde(default)]
    pub strength: Option<u8>,
    pub annotator: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

impl JudgmentRecord {
    pub fn validate(&self) -> Result<()> {
        use Preference::*;
        let ok = match (self.system_a_sensible, self.system_b_sensible, self.preferred) {
            (true, true, Some(_)) => true,
            (true, true, None) => false,
            (true, false, None | Some(A)) | (false, true, None | Some(B)) => true,
            (false, false, None) => true,
            _ => false,
        };
        if !ok {
            return Err(Error::Contract(format!(
                "preference {:?} inconsistent with sensible flags ({}, {})",
                self.preferred, self.system_a_sensible, self.system_b_sensible
            )));
        }
        if self.strength.is_some_and(|s| !(1..=3).contains(&s)) {
            return Err(Error::Contract("strength must be 1, 2 or 3".into()));
        }
        Ok(())
    }

    /// Outcome under the judging rule: a side wins if it alone was sensible,
    /// or both were and it was preferred. Everything else is a draw.
    pub fn outcome(&self) -> Preference {
        match (self.system_a_sensible, self.system_b_sensible, self.preferred) {
            (true, false, _) => Preference::A,
            (false, true, _) => Preference::B,
            (true, true, Some(p)) => p,
            _ => Preference::Draw,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemRates {
    pub sensible: f64,
    pub better: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlausibilityReport {
    pub judgments: usize,
    pub system_a: SystemRates,
    pub system_b: SystemRates,
    pub draw: f64,
    pub a_wins: usize,
    pub b_wins: usize,
    pub draws: usize,
    /// Exact two-sided sign test over non-draw outcomes; `None` without any.
    pub p_value: Option<f64>,
    pub flags: Vec<String>,
}

pub fn aggregate_judgments(records: &[JudgmentRecord]) -> Result<PlausibilityReport> {
    for r in records {
        r.validate()?;
    }
    let n = records.len();
    let (mut a_wins, mut b_wins, mut draws, mut a_ok, mut b_ok) = (0, 0, 0, 0, 0);
    for r in records {
        match r.outcome() {
            Preference::A => a_wins += 1,
            Preference::B => b_wins += 1,
            Preference::Draw => draws += 1,
        }
        a_ok += usize::from(r.system_a_sensible);
        b_ok += usize::from(r.system_b_sensible);
    }
    let rate = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    let mut flags = Vec::new();
    if n == 0 {
        flags.push("no judgments".to_owned());
    }
    let p_value = sign_test_two_sided(a_wins, a_wins + b_wins);
    if p_value.is_none() {
        flags.push("no non-draw comparisons; p-value undefined".to_owned());
    }
    Ok(PlausibilityReport {
        judgments: n,
        system_a: SystemRates {
            sensible: rate(a_ok),
            better: rate(a_wins),
        },
        system_b: SystemRates {
            sensible: rate(b_ok),
            better: rate(b_wins),
        },
        draw: rate(draws),
        a_wins,
        b_wins,
        draws,
        p_value,
        flags,
    })
}

/// Exact two-sided binomial sign test of `k` successes in `n` fair trials:
/// `min(1, 2 P(X <= min(k, n - k)))`.
pub fn sign_test_two_sided(k: usize, n: usize) -> Option<f64> {
    if n == 0 {
        return None;
    }
    let m = k.min(n - k);
    // log pmf(i) = log C(n, i) - n log 2, accumulated incrementally.
    let mut log_pmf = -(n as f64) * std::f64::consts::LN_2;
    let mut logs = vec![log_pmf];
    for i in 1..=m {
        log_pmf += ((n - i + 1) as f64).ln() - (i as f64).ln();
        logs.push(log_pmf);
    }
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tail = top.exp() * logs.iter().map(|l| (l - top).exp()).sum::<f64>();
    Some((2.0 * tail).min(1.0))
}
