//! Batch runner for the theory checks, emitting one JSON object per case.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::{
    check_bound, check_limits, check_recovery, check_sandwich, compare_posteriors, sample_complexity,
    sample_complexity_bound, BiasMode, DiscreteJointModel, LinearRule, Loss, WeightTable,
};
use crate::bias::derive_seed;
use crate::classifiers::plugin::Constraint;
use crate::error::{invalid, Error, Result};
use crate::synthetic::{make_model, SyntheticProfile, UNIFORM_PRIORS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckKind {
    Sandwich,
    Recovery,
    Symmetry,
    Limits,
    Complexity,
    Bound,
}

impl CheckKind {
    pub const ALL: [CheckKind; 6] = [
        CheckKind::Sandwich,
        CheckKind::Recovery,
        CheckKind::Symmetry,
        CheckKind::Limits,
        CheckKind::Complexity,
        CheckKind::Bound,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CheckKind::Sandwich => "sandwich",
            CheckKind::Recovery => "recovery",
            CheckKind::Symmetry => "symmetry",
            CheckKind::Limits => "limits",
            CheckKind::Complexity => "complexity",
            CheckKind::Bound => "thm5",
        }
    }

    /// Case count used when none is given.
    pub fn default_cases(self) -> usize {
        match self {
            CheckKind::Sandwich => 200,
            CheckKind::Recovery => 20,
            CheckKind::Symmetry => 10_000,
            CheckKind::Limits => 20,
            CheckKind::Complexity => 1,
            CheckKind::Bound => 100,
        }
    }
}

impl fmt::Display for CheckKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CheckKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        CheckKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s || (s == "bound" && *k == CheckKind::Bound))
            .ok_or_else(|| invalid("check", format!("unknown check `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub check: CheckKind,
    /// Models, evaluation points or trials depending on the check.
    pub cases: usize,
    pub seed: u64,
    pub alpha: f64,
    pub beta: f64,
    pub eps: f64,
    pub delta: f64,
    pub tiny_beta: f64,
}

impl VerifyOptions {
    pub fn new(check: CheckKind) -> Self {
        Self {
            check,
            cases: check.default_cases(),
            seed: 1,
            alpha: 1.0,
            beta: 1.0,
            eps: 0.1,
            delta: 0.05,
            tiny_beta: 1e-8,
        }
    }
}

/// Result lines plus the overall verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOutcome {
    pub lines: Vec<Value>,
    pub failed: usize,
}

impl VerifyOutcome {
    pub fn passed(&self) -> bool {
        self.failed == 0
    }

    fn push(&mut self, pass: bool, mut line: Value) {
        if let Value::Object(m) = &mut line {
            m.insert("pass".into(), Value::Bool(pass));
        }
        self.failed += usize::from(!pass);
        self.lines.push(line);
    }
}

pub const SANDWICH_BETAS: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
pub const RECOVERY_LAMBDAS: [f64; 4] = [-0.5, 0.0, 0.3, 0.8];
pub const RECOVERY_BETAS: [f64; 3] = [0.2, 0.5, 1.0];
pub const LIMIT_LAMBDAS: [f64; 5] = [-2.0, -0.5, 0.0, 0.5, 1.5];

pub fn run(opts: &VerifyOptions) -> Result<VerifyOutcome> {
    let mut out = VerifyOutcome {
        lines: Vec::new(),
        failed: 0,
    };
    let name = opts.check.as_str();
    match opts.check {
        CheckKind::Sandwich => {
            for case in 0..opts.cases {
                let seed = derive_seed(opts.seed, case as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let model = DiscreteJointModel::random(16, 3, seed);
                let rule = LinearRule::random(3, &mut rng);
                let beta = SANDWICH_BETAS[case % SANDWICH_BETAS.len()];
                let mode = BiasMode::BOTH[(case / SANDWICH_BETAS.len()) % 2];
                let loss = [Loss::ZeroOne, Loss::Log][(case / (2 * SANDWICH_BETAS.len())) % 2];
                let r = check_sandwich(&model, &rule, beta, mode, loss)?;
                out.push(
                    r.holds,
                    json!({"check": name, "case": case, "beta": beta, "mode": mode.as_str(),
                           "loss": loss.as_str(), "alpha": r.alpha, "lhs": r.lhs, "mid": r.mid, "rhs": r.rhs}),
                );
            }
        }
        CheckKind::Recovery => {
            for case in 0..opts.cases {
                let seed = derive_seed(opts.seed, case as u64);
                let model = DiscreteJointModel::random(16, 3, seed);
                for constraint in [Constraint::Spd, Constraint::Eod] {
                    for mode in BiasMode::BOTH {
                        for &beta in &RECOVERY_BETAS {
                            for &lambda in &RECOVERY_LAMBDAS {
                                let r = match check_recovery(
                                    &model,
                                    beta,
                                    mode,
                                    lambda,
                                    constraint,
                                    WeightTable::Corrected,
                                ) {
                                    Err(Error::SingularLambda { .. }) => continue,
                                    other => other?,
                                };
                                out.push(
                                    r.agreement == 1.0,
                                    json!({"check": name, "case": case, "constraint": constraint.as_str(),
                                           "mode": mode.as_str(), "beta": beta, "lambda": lambda,
                                           "table": "corrected", "agreement": r.agreement,
                                           "disagreements": r.disagreements}),
                                );
                            }
                        }
                    }
                }
            }
        }
        CheckKind::Symmetry => {
            let profile = SyntheticProfile::DESK;
            let model = make_model(profile.dim, 1.0, UNIFORM_PRIORS, opts.seed)?;
            let ds = model.sample(opts.cases, derive_seed(opts.seed, 1))?;
            let rows: Vec<Vec<f64>> = (0..ds.len()).map(|i| ds.row(i).to_vec()).collect();
            let points: Vec<(&[f64], u8)> = rows
                .iter()
                .map(Vec::as_slice)
                .zip(ds.groups().iter().copied())
                .collect();
            for &beta in &SANDWICH_BETAS {
                let r = compare_posteriors(&model, beta, beta, &points, None)?;
                out.push(
                    r.holds,
                    json!({"check": name, "beta": beta, "points": r.points,
                           "max_eta_gap": r.max_eta_gap, "prediction_changes": r.prediction_changes}),
                );
            }
        }
        CheckKind::Limits => {
            for case in 0..opts.cases {
                let seed = derive_seed(opts.seed, case as u64);
                let model = DiscreteJointModel::random(16, 3, seed);
                for mode in BiasMode::BOTH {
                    for constraint in [Constraint::Spd, Constraint::Eod] {
                        for &lambda in &LIMIT_LAMBDAS {
                            let c = check_limits(&model, lambda, opts.tiny_beta, mode, constraint)?;
                            if c.stated.is_none() {
                                continue;
                            }
                            out.push(
                                c.stated_holds(),
                                json!({"check": name, "case": case, "mode": mode.as_str(),
                                       "constraint": constraint.as_str(), "lambda": lambda,
                                       "base_rate": c.base_rate, "stated": c.stated, "derived": c.derived,
                                       "stated_mismatches": c.stated_mismatches,
                                       "derived_mismatches": c.derived_mismatches, "points": c.points}),
                            );
                        }
                    }
                }
            }
        }
        CheckKind::Complexity => {
            let bound = sample_complexity_bound(opts.alpha, opts.beta, opts.eps, opts.delta)?;
            let n = sample_complexity(opts.alpha, opts.beta, opts.eps, opts.delta)?;
            out.push(
                true,
                json!({"check": name, "alpha": opts.alpha, "beta": opts.beta, "eps": opts.eps,
                       "delta": opts.delta, "bound": bound, "n": n}),
            );
        }
        CheckKind::Bound => {
            let model = DiscreteJointModel::random_balanced(16, 3, opts.seed);
            let alpha = model.alpha();
            let n = sample_complexity(alpha.min(1.0), opts.beta, opts.eps, opts.delta)?;
            let r = check_bound(
                &model,
                opts.beta,
                BiasMode::Pos,
                n,
                opts.delta,
                opts.cases,
                derive_seed(opts.seed, 2),
            )?;
            out.push(
                r.violations == 0,
                json!({"check": name, "alpha": alpha, "beta": opts.beta, "n": n, "delta": opts.delta,
                       "trials": r.trials, "violations": r.violations, "resampled": r.resampled,
                       "bound": r.bound, "bayes_risk": r.bayes_risk, "worst_risk": r.worst_risk,
                       "mean_risk": r.mean_risk, "worst_over_bound": r.worst_risk / r.bound}),
            );
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for k in CheckKind::ALL {
            assert_eq!(k.as_str().parse::<CheckKind>().unwrap(), k);
        }
        assert!("proof".parse::<CheckKind>().is_err());
    }

    #[test]
    fn complexity_line() {
        let out = run(&VerifyOptions::new(CheckKind::Complexity)).unwrap();
        assert!(out.passed());
        assert_eq!(out.lines[0]["n"], 47218);
    }

    #[test]
    fn small_sandwich_batch_passes() {
        let mut o = VerifyOptions::new(CheckKind::Sandwich);
        o.cases = 40;
        let out = run(&o).unwrap();
        assert_eq!(out.lines.len(), 40);
        assert!(out.passed());
    }

    #[test]
    fn limits_report_both_forms() {
        let mut o = VerifyOptions::new(CheckKind::Limits);
        o.cases = 1;
        let out = run(&o).unwrap();
        assert_eq!(out.lines.len(), 20);
        for line in &out.lines {
            assert_eq!(line["derived_mismatches"], 0, "{line}");
        }
    }
}
