//! Group-specific thresholding of a posterior estimate.
//!
//! The fair Bayes-optimal classifiers under a statistical parity or equal
//! opportunity penalty with trade-off `lambda` are thresholdings of an
//! adjusted score `s*(x, s)`: predict 1 when `s* > 0` and `tie_break` when
//! `s* == 0`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Which group-fairness penalty the trade-off targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Constraint {
    /// Statistical parity (equal acceptance rates).
    Spd,
    /// Equal opportunity (equal true-positive rates).
    Eod,
}

impl Constraint {
    pub fn as_str(self) -> &'static str {
        match self {
            Constraint::Spd => "spd",
            Constraint::Eod => "eod",
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Constraint {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spd" => Ok(Constraint::Spd),
            "eod" => Ok(Constraint::Eod),
            other => Err(invalid("constraint", format!("`{other}` is not spd or eod"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffParams {
    pub lambda: f64,
    pub constraint: Constraint,
    /// `P(Y = 1)`; only read for [`Constraint::Eod`].
    pub base_rate: f64,
    pub tie_break: u8,
}

impl TradeoffParams {
    pub fn new(lambda: f64, constraint: Constraint, base_rate: f64, tie_break: u8) -> Result<Self> {
        if !lambda.is_finite() {
            return Err(invalid("lambda", "must be finite"));
        }
        if constraint == Constraint::Eod && !(base_rate > 0.0 && base_rate < 1.0) {
            return Err(invalid("base_rate", format!("{base_rate} not in (0, 1)")));
        }
        if tie_break > 1 {
            return Err(invalid("tie_break", "must be 0 or 1"));
        }
        Ok(Self {
            lambda,
            constraint,
            base_rate,
            tie_break,
        })
    }

    /// Adjusted score `s*(x, s)` for a posterior value `eta`.
    pub fn adjusted_score(&self, eta: f64, s: u8) -> f64 {
        let l = self.lambda;
        match (self.constraint, s) {
            (Constraint::Spd, 0) => eta - 0.5 * (1.0 - l),
            (Constraint::Spd, _) => eta - 0.5 * (1.0 + l),
            (Constraint::Eod, 0) => (1.0 + l / (2.0 * self.base_rate)) * eta - 0.5,
            (Constraint::Eod, _) => (1.0 - l / (2.0 * self.base_rate)) * eta - 0.5,
        }
    }

    /// The rule as a threshold on `eta` for group `s`: predict 1 iff
    /// `eta > c`. Thresholds outside `[0, 1]` are clamped; a non-positive
    /// EOD slope means the group is never accepted and maps to 1.
    pub fn eta_threshold(&self, s: u8) -> f64 {
        let l = self.lambda;
        let c = match (self.constraint, s) {
            (Constraint::Spd, 0) => 0.5 * (1.0 - l),
            (Constraint::Spd, _) => 0.5 * (1.0 + l),
            (Constraint::Eod, _) => {
                let slope = if s == 0 {
                    1.0 + l / (2.0 * self.base_rate)
                } else {
                    1.0 - l / (2.0 * self.base_rate)
                };
                if slope <= 0.0 {
                    return 1.0;
                }
                0.5 / slope
            }
        };
        c.clamp(0.0, 1.0)
    }
}

/// `1{eta > c}`, `tie_break` when `eta == c`.
pub fn threshold_predict(eta: f64, c: f64, tie_break: u8) -> u8 {
    if eta > c {
        1
    } else if eta == c {
        tie_break
    } else {
        0
    }
}

/// `H_alpha(s*(x, s))` with `alpha = tie_break`.
pub fn plugin_fair_predict(eta: f64, s: u8, params: &TradeoffParams) -> u8 {
    threshold_predict(params.adjusted_score(eta, s), 0.0, params.tie_break)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spd(lambda: f64) -> TradeoffParams {
        TradeoffParams::new(lambda, Constraint::Spd, 0.5, 1).unwrap()
    }

    #[test]
    fn zero_lambda_is_the_bayes_rule() {
        for c in [Constraint::Spd, Constraint::Eod] {
            let p = TradeoffParams::new(0.0, c, 0.3, 1).unwrap();
            for &eta in &[0.0, 0.2, 0.49, 0.5, 0.51, 0.9, 1.0] {
                for s in 0..2 {
                    assert_eq!(plugin_fair_predict(eta, s, &p), threshold_predict(eta, 0.5, 1));
                }
            }
        }
    }

    #[test]
    fn parity_example() {
        let p = spd(0.4);
        assert!((p.adjusted_score(0.6, 0) - 0.3).abs() < 1e-15);
        assert_eq!(plugin_fair_predict(0.6, 0, &p), 1);
        assert!((p.adjusted_score(0.6, 1) + 0.1).abs() < 1e-15);
        assert_eq!(plugin_fair_predict(0.6, 1, &p), 0);
    }

    #[test]
    fn opportunity_example() {
        let p = TradeoffParams::new(0.2, Constraint::Eod, 0.5, 1).unwrap();
        assert!((p.adjusted_score(0.4, 0) + 0.02).abs() < 1e-12);
        assert_eq!(plugin_fair_predict(0.4, 0, &p), 0);
    }

    #[test]
    fn tie_rule() {
        assert_eq!(threshold_predict(0.3, 0.3, 1), 1);
        assert_eq!(threshold_predict(0.3, 0.3, 0), 0);
        assert_eq!(threshold_predict(1e-9, 0.0, 0), 1);
        let p = TradeoffParams::new(0.0, Constraint::Spd, 0.5, 0).unwrap();
        assert_eq!(plugin_fair_predict(0.5, 0, &p), 0);
    }

    #[test]
    fn eod_needs_a_proper_base_rate() {
        assert!(TradeoffParams::new(0.1, Constraint::Eod, 0.0, 1).is_err());
        assert!(TradeoffParams::new(0.1, Constraint::Eod, 1.0, 1).is_err());
        assert!(TradeoffParams::new(0.1, Constraint::Spd, 0.0, 1).is_ok());
    }

    #[test]
    fn constraint_round_trips_through_text() {
        for c in [Constraint::Spd, Constraint::Eod] {
            assert_eq!(c.as_str().parse::<Constraint>().unwrap(), c);
        }
        assert!("dp".parse::<Constraint>().is_err());
    }

    proptest! {
        #[test]
        fn parity_thresholds_move_monotonically(
            eta in 0.0f64..=1.0, l1 in -2.0f64..2.0, dl in 0.0f64..2.0
        ) {
            let (a, b) = (spd(l1), spd(l1 + dl));
            prop_assert!(plugin_fair_predict(eta, 0, &b) >= plugin_fair_predict(eta, 0, &a));
            prop_assert!(plugin_fair_predict(eta, 1, &b) <= plugin_fair_predict(eta, 1, &a));
        }

        #[test]
        fn threshold_form_agrees_with_score_form(
            eta in 1e-6f64..1.0, lambda in -3.0f64..3.0, p in 0.05f64..0.95, s in 0u8..2, eod: bool
        ) {
            let c = if eod { Constraint::Eod } else { Constraint::Spd };
            let params = TradeoffParams::new(lambda, c, p, 1).unwrap();
            let score = params.adjusted_score(eta, s);
            // Away from the boundary both forms must agree.
            prop_assume!(score.abs() > 1e-9);
            let t = params.eta_threshold(s);
            prop_assert_eq!(u8::from(score > 0.0), u8::from(eta > t));
        }
    }
}
