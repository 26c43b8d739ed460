//! Error rate, statistical parity difference and equal opportunity
//! difference from per-subgroup confusion counts.
//!
//! Undefined rates (an empty group or an empty positive cell) come back as
//! `None` and are never coerced to 0.

use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledDataset, PerSubgroup, Subgroup};
use crate::error::{Error, Result};

/// For each `(y, s)` cell: how many rows were predicted 0 and 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionBySubgroup {
    /// `predicted[g] = [count predicted 0, count predicted 1]`.
    pub predicted: PerSubgroup<[usize; 2]>,
}

impl ConfusionBySubgroup {
    pub fn from_parts(labels: &[u8], groups: &[u8], preds: &[u8]) -> Result<Self> {
        if preds.len() != labels.len() {
            return Err(Error::LengthMismatch {
                expected: labels.len(),
                got: preds.len(),
            });
        }
        if groups.len() != labels.len() {
            return Err(Error::LengthMismatch {
                expected: labels.len(),
                got: groups.len(),
            });
        }
        let mut predicted = PerSubgroup([[0usize; 2]; 4]);
        for ((&y, &s), &p) in labels.iter().zip(groups).zip(preds) {
            predicted[Subgroup::new(y, s)][usize::from(p != 0)] += 1;
        }
        Ok(Self { predicted })
    }

    pub fn total(&self) -> usize {
        self.predicted.0.iter().map(|c| c[0] + c[1]).sum()
    }

    pub fn cell(&self, g: Subgroup) -> usize {
        let c = self.predicted[g];
        c[0] + c[1]
    }

    pub fn errors(&self) -> usize {
        Subgroup::ALL
            .iter()
            .map(|&g| self.predicted[g][usize::from(g.y == 0)])
            .sum()
    }

    /// `P(Yhat = 1 | S = s)`.
    pub fn acceptance_rate(&self, s: u8) -> Option<f64> {
        let neg = self.predicted[Subgroup::new(0, s)];
        let pos = self.predicted[Subgroup::new(1, s)];
        let n = neg[0] + neg[1] + pos[0] + pos[1];
        (n > 0).then(|| (neg[1] + pos[1]) as f64 / n as f64)
    }

    /// `P(Yhat = 1 | Y = 1, S = s)`.
    pub fn true_positive_rate(&self, s: u8) -> Option<f64> {
        let c = self.predicted[Subgroup::new(1, s)];
        let n = c[0] + c[1];
        (n > 0).then(|| c[1] as f64 / n as f64)
    }

    /// `P(Yhat = 1 | Y = 0, S = s)`.
    pub fn false_positive_rate(&self, s: u8) -> Option<f64> {
        let c = self.predicted[Subgroup::new(0, s)];
        let n = c[0] + c[1];
        (n > 0).then(|| c[1] as f64 / n as f64)
    }
}

pub fn confusion(preds: &[u8], ds: &LabeledDataset) -> Result<ConfusionBySubgroup> {
    ConfusionBySubgroup::from_parts(ds.labels(), ds.groups(), preds)
}

pub fn error_rate(conf: &ConfusionBySubgroup) -> f64 {
    let n = conf.total();
    if n == 0 {
        return 0.0;
    }
    conf.errors() as f64 / n as f64
}

/// `|P(Yhat=1 | S=1) - P(Yhat=1 | S=0)|`.
pub fn spd(conf: &ConfusionBySubgroup) -> Option<f64> {
    Some((conf.acceptance_rate(1)? - conf.acceptance_rate(0)?).abs())
}

/// `|P(Yhat=1 | Y=1, S=1) - P(Yhat=1 | Y=1, S=0)|`.
pub fn eod(conf: &ConfusionBySubgroup) -> Option<f64> {
    Some((conf.true_positive_rate(1)? - conf.true_positive_rate(0)?).abs())
}

/// The three audited quantities for one prediction vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub err: f64,
    pub spd: Option<f64>,
    pub eod: Option<f64>,
}

pub fn evaluate(preds: &[u8], ds: &LabeledDataset) -> Result<MetricSet> {
    let c = confusion(preds, ds)?;
    Ok(MetricSet {
        err: error_rate(&c),
        spd: spd(&c),
        eod: eod(&c),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn conf(labels: &[u8], groups: &[u8], preds: &[u8]) -> ConfusionBySubgroup {
        ConfusionBySubgroup::from_parts(labels, groups, preds).unwrap()
    }

    #[test]
    fn perfect_predictions_have_no_off_diagonal() {
        let y = [0, 1, 1, 0, 1, 0];
        let s = [0, 0, 1, 1, 1, 0];
        let c = conf(&y, &s, &y);
        for g in Subgroup::ALL {
            assert_eq!(c.predicted[g][usize::from(g.y == 0)], 0);
        }
        assert_eq!(error_rate(&c), 0.0);
        let flipped: Vec<u8> = y.iter().map(|v| 1 - v).collect();
        assert_eq!(error_rate(&conf(&y, &s, &flipped)), 1.0);
    }

    #[test]
    fn all_positive_accepts_everyone() {
        let y = [0, 1, 1, 0];
        let s = [0, 0, 1, 1];
        let c = conf(&y, &s, &[1, 1, 1, 1]);
        assert_eq!(c.acceptance_rate(0), Some(1.0));
        assert_eq!(c.acceptance_rate(1), Some(1.0));
        assert_eq!(spd(&c), Some(0.0));
    }

    #[test]
    fn hand_tally_eight_rows() {
        // (y, s, pred)
        let rows = [
            (0, 0, 0),
            (0, 0, 1),
            (1, 0, 1),
            (1, 0, 0),
            (0, 1, 0),
            (1, 1, 1),
            (1, 1, 1),
            (0, 1, 1),
        ];
        let y: Vec<u8> = rows.iter().map(|r| r.0).collect();
        let s: Vec<u8> = rows.iter().map(|r| r.1).collect();
        let p: Vec<u8> = rows.iter().map(|r| r.2).collect();
        let c = conf(&y, &s, &p);
        assert_eq!(c.predicted[Subgroup::new(0, 0)], [1, 1]);
        assert_eq!(c.predicted[Subgroup::new(1, 0)], [1, 1]);
        assert_eq!(c.predicted[Subgroup::new(0, 1)], [1, 1]);
        assert_eq!(c.predicted[Subgroup::new(1, 1)], [0, 2]);
        assert_eq!(c.errors(), 3);
        assert_eq!(c.total(), 8);
    }

    #[test]
    fn error_three_of_ten() {
        let y = [1, 1, 1, 0, 0, 0, 1, 0, 1, 0];
        let s = [0; 10];
        let mut p = y;
        p[0] = 0;
        p[4] = 1;
        p[9] = 1;
        assert!((error_rate(&conf(&y, &s, &p)) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn spd_examples() {
        // acceptance 0.6 vs 0.4
        let s = [1, 1, 1, 1, 1, 0, 0, 0, 0, 0];
        let y = [0; 10];
        let p = [1, 1, 1, 0, 0, 1, 1, 0, 0, 0];
        assert!((spd(&conf(&y, &s, &p)).unwrap() - 0.2).abs() < 1e-15);
        // [1,1,0,1 | s=1; 1,0,0,0 | s=0]
        let s = [1, 1, 1, 1, 0, 0, 0, 0];
        let y = [0, 1, 0, 1, 0, 1, 0, 1];
        let p = [1, 1, 0, 1, 1, 0, 0, 0];
        assert_eq!(spd(&conf(&y, &s, &p)), Some(0.5));
        assert_eq!(spd(&conf(&y, &s, &[0; 8])), Some(0.0));
    }

    #[test]
    fn eod_examples() {
        // positives: group 1 preds [1,1,0], group 0 preds [1,0,0,0]
        let y = [1, 1, 1, 1, 1, 1, 1];
        let s = [1, 1, 1, 0, 0, 0, 0];
        let p = [1, 1, 0, 1, 0, 0, 0];
        assert!((eod(&conf(&y, &s, &p)).unwrap() - 5.0 / 12.0).abs() < 1e-15);
        let p = [1, 1, 1, 0, 0, 0, 0];
        assert_eq!(eod(&conf(&y, &s, &p)), Some(1.0));
    }

    #[test]
    fn undefined_metrics_are_missing() {
        let c = conf(&[0, 1], &[1, 1], &[1, 0]);
        assert_eq!(spd(&c), None);
        assert_eq!(eod(&c), None);
        let c = conf(&[0, 1, 0], &[0, 1, 1], &[1, 0, 1]);
        assert!(spd(&c).is_some());
        assert_eq!(eod(&c), None);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(ConfusionBySubgroup::from_parts(&[0, 1], &[0, 1], &[1]).is_err());
    }

    fn rows() -> impl Strategy<Value = Vec<(u8, u8, u8)>> {
        proptest::collection::vec((0u8..2, 0u8..2, 0u8..2), 1..60)
    }

    fn metrics_of(rows: &[(u8, u8, u8)]) -> (f64, Option<f64>, Option<f64>) {
        let y: Vec<u8> = rows.iter().map(|r| r.0).collect();
        let s: Vec<u8> = rows.iter().map(|r| r.1).collect();
        let p: Vec<u8> = rows.iter().map(|r| r.2).collect();
        let c = conf(&y, &s, &p);
        (error_rate(&c), spd(&c), eod(&c))
    }

    proptest! {
        #[test]
        fn invariant_to_row_permutation(mut r in rows(), k in 0usize..60) {
            let before = metrics_of(&r);
            let len = r.len();
            r.rotate_left(k % len);
            r.reverse();
            prop_assert_eq!(before, metrics_of(&r));
        }

        #[test]
        fn symmetric_under_group_swap(r in rows()) {
            let swapped: Vec<_> = r.iter().map(|&(y, s, p)| (y, 1 - s, p)).collect();
            let (e1, s1, o1) = metrics_of(&r);
            let (e2, s2, o2) = metrics_of(&swapped);
            prop_assert_eq!(e1, e2);
            prop_assert_eq!(s1, s2);
            prop_assert_eq!(o1, o2);
        }

        #[test]
        fn eod_unchanged_by_prediction_flip(r in rows()) {
            let flipped: Vec<_> = r.iter().map(|&(y, s, p)| (y, s, 1 - p)).collect();
            let a = metrics_of(&r).2;
            let b = metrics_of(&flipped).2;
            match (a, b) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
                (a, b) => prop_assert_eq!(a, b),
            }
        }

        #[test]
        fn metrics_in_unit_interval(r in rows()) {
            let (e, s, o) = metrics_of(&r);
            prop_assert!((0.0..=1.0).contains(&e));
            for v in [s, o].into_iter().flatten() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
