//! Sample-weight schemes: Kamiran–Calders reweighing and bias-corrected
//! cost weights.
//!
//! A cost table assigns each group a false-positive weight `c` and a
//! false-negative weight `1 - c`; minimizing that weighted 0/1 risk
//! thresholds the posterior at `eta > c`. Under-representation multiplies
//! the group-0 posterior odds by `kappa = beta_pos / beta_neg`, so a target
//! threshold `c` on the unbiased posterior becomes
//! `kappa c / (kappa c + 1 - c)` on the biased one. The tables below are
//! that map applied to the fair thresholds of the plug-in rules.

use serde::{Deserialize, Serialize};

use crate::classifiers::plugin::{Constraint, TradeoffParams};
use crate::dataset::{subgroup_stats, LabeledDataset, PerSubgroup, Subgroup};
use crate::error::{invalid, Error, Result};

/// `W_ys = P(Y=y) P(S=s) / P(Y=y, S=s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReweighWeights(pub PerSubgroup<f64>);

impl ReweighWeights {
    /// Weights from subgroup probabilities; every cell must be positive.
    pub fn from_probs(probs: &PerSubgroup<f64>) -> Result<Self> {
        for g in Subgroup::ALL {
            if !(probs[g] > 0.0) {
                return Err(Error::EmptySubgroup(g));
            }
        }
        let py = |y| probs[Subgroup::new(y, 0)] + probs[Subgroup::new(y, 1)];
        let ps = |s| probs[Subgroup::new(0, s)] + probs[Subgroup::new(1, s)];
        Ok(Self(PerSubgroup::from_fn(|g| py(g.y) * ps(g.s) / probs[g])))
    }

    /// Weights from subgroup counts as `n_y n_s / (n n_ys)`, so each weight
    /// is rounded once.
    pub fn from_counts(counts: &PerSubgroup<usize>) -> Result<Self> {
        if let Some((g, _)) = counts.iter().find(|&(_, c)| c == 0) {
            return Err(Error::EmptySubgroup(g));
        }
        let c = |y, s| counts[Subgroup::new(y, s)] as u128;
        let n = counts.0.iter().map(|&v| v as u128).sum::<u128>();
        Ok(Self(PerSubgroup::from_fn(|g| {
            let ny = c(g.y, 0) + c(g.y, 1);
            let ns = c(0, g.s) + c(1, g.s);
            (ny * ns) as f64 / (n * c(g.y, g.s)) as f64
        })))
    }

    pub fn get(&self, g: Subgroup) -> f64 {
        self.0[g]
    }

    pub fn row_weights(&self, ds: &LabeledDataset) -> Vec<f64> {
        (0..ds.len()).map(|i| self.0[ds.subgroup_of(i)]).collect()
    }
}

pub fn reweigh_weights(ds: &LabeledDataset) -> Result<ReweighWeights> {
    ReweighWeights::from_counts(&subgroup_stats(ds).counts)
}

/// False-positive and false-negative weight per group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    /// Indexed by group `s`.
    pub fp: [f64; 2],
    /// Indexed by group `s`.
    pub fn_: [f64; 2],
}

impl CostWeights {
    pub const UNIFORM: CostWeights = CostWeights {
        fp: [0.5, 0.5],
        fn_: [0.5, 0.5],
    };

    /// FP weight `c_s`, FN weight `1 - c_s`.
    pub fn from_thresholds(c: [f64; 2]) -> Self {
        Self {
            fp: c,
            fn_: [1.0 - c[0], 1.0 - c[1]],
        }
    }

    /// Posterior threshold the table induces for group `s`.
    pub fn threshold(&self, s: u8) -> f64 {
        let s = usize::from(s);
        self.fp[s] / (self.fp[s] + self.fn_[s])
    }

    /// FP weight for negatives, FN weight for positives.
    pub fn row_weight(&self, y: u8, s: u8) -> f64 {
        let s = usize::from(s);
        if y == 0 {
            self.fp[s]
        } else {
            self.fn_[s]
        }
    }

    pub fn row_weights(&self, ds: &LabeledDataset) -> Vec<f64> {
        ds.labels()
            .iter()
            .zip(ds.groups())
            .map(|(&y, &s)| self.row_weight(y, s))
            .collect()
    }
}

/// Moves a threshold on the unbiased posterior to the posterior whose odds
/// are scaled by `kappa`. Thresholds at or outside `{0, 1}` mean "always"
/// or "never" and are unaffected by the odds shift.
pub fn shift_threshold(c: f64, kappa: f64) -> f64 {
    if c <= 0.0 {
        0.0
    } else if c >= 1.0 {
        1.0
    } else {
        kappa * c / (kappa * c + 1.0 - c)
    }
}

fn check_beta(name: &'static str, b: f64) -> Result<()> {
    if b > 0.0 && b <= 1.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("{b} not in (0, 1]")))
    }
}

/// Cost table whose weighted risk on data biased by `(beta_pos, beta_neg)`
/// is minimized by the plug-in fair classifier of the unbiased
/// distribution. `params.base_rate` must be `P(Y=1)` of the unbiased
/// distribution.
pub fn corrected_weights(
    beta_pos: f64,
    beta_neg: f64,
    params: &TradeoffParams,
) -> Result<CostWeights> {
    check_beta("beta_pos", beta_pos)?;
    check_beta("beta_neg", beta_neg)?;
    let l = params.lambda;
    match params.constraint {
        Constraint::Spd if l == 1.0 => return Err(Error::SingularLambda { lambda: l }),
        Constraint::Eod if l == 2.0 * params.base_rate => {
            return Err(Error::SingularLambda { lambda: l })
        }
        _ => {}
    }
    let kappa = beta_pos / beta_neg;
    Ok(CostWeights::from_thresholds([
        shift_threshold(params.eta_threshold(0), kappa),
        params.eta_threshold(1),
    ]))
}

/// Parity table for under-representation of the positive underprivileged
/// subgroup: group 1 gets `((1+l)/2, (1-l)/2)`, group 0 gets FP weight
/// `((1+l) / (beta (1-l)) + 1)^-1` inside `|l| < 1`.
pub fn corrected_weights_spd(beta_pos: f64, lambda: f64) -> Result<CostWeights> {
    let params = TradeoffParams::new(lambda, Constraint::Spd, 0.5, 1)?;
    corrected_weights(beta_pos, 1.0, &params)
}

/// Equal-opportunity table for under-representation of the positive
/// underprivileged subgroup. `p10`, `p11` are subgroup masses of the
/// unbiased distribution; the thresholds use its base rate `p10 + p11`.
pub fn corrected_weights_eod(beta_pos: f64, lambda: f64, p10: f64, p11: f64) -> Result<CostWeights> {
    let params = TradeoffParams::new(lambda, Constraint::Eod, p10 + p11, 1)?;
    corrected_weights(beta_pos, 1.0, &params)
}

/// Equal-opportunity table written with the biased-scale positive mass
/// `beta p10 + p11` in place of the base rate:
/// group 1 FP `1 / (2 (1 - l / (2 (beta p10 + p11))))`, group 0 FP
/// `((1+beta)/beta + l / (beta (beta p10 + p11)))^-1`.
///
/// Kept for comparison only. It agrees with [`corrected_weights_eod`] at
/// `beta = 1` or `l = 0` and otherwise does not recover the fair
/// classifier of the unbiased distribution.
pub fn corrected_weights_eod_biased_mass(
    beta_pos: f64,
    lambda: f64,
    p10: f64,
    p11: f64,
) -> Result<CostWeights> {
    check_beta("beta_pos", beta_pos)?;
    let m = beta_pos * p10 + p11;
    if !(m > 0.0) {
        return Err(invalid("p11", "positive mass must be positive"));
    }
    let d1 = 1.0 - lambda / (2.0 * m);
    if d1 == 0.0 {
        return Err(Error::SingularLambda { lambda });
    }
    let inv0 = (1.0 + beta_pos) / beta_pos + lambda / (beta_pos * m);
    if inv0 == 0.0 {
        return Err(Error::SingularLambda { lambda });
    }
    Ok(CostWeights::from_thresholds([1.0 / inv0, 1.0 / (2.0 * d1)]))
}
