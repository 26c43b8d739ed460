//! A finite joint distribution over `(x, y, s)` with exact expectations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{PerSubgroup, Subgroup};
use crate::error::{invalid, Result};
use crate::synthetic::logistic;

/// Feature points per group and the mass `P(x_k, y, s)` of every cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteJointModel {
    /// `points[s][k]` is the feature vector of support point `k` in group `s`.
    points: [Vec<Vec<f64>>; 2],
    /// `mass[s][k][y]`.
    mass: [Vec<[f64; 2]>; 2],
}

/// Loss used by the expectation routines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Loss {
    /// `1{h != y}` with `h = 1{p > 1/2}`.
    ZeroOne,
    /// `-ln p` for `y = 1`, `-ln(1 - p)` for `y = 0`.
    Log,
}

impl Loss {
    pub fn as_str(self) -> &'static str {
        match self {
            Loss::ZeroOne => "zero-one",
            Loss::Log => "log",
        }
    }

    /// Loss of predicted probability `p` on label `y`.
    pub fn eval(self, p: f64, y: u8) -> f64 {
        match self {
            Loss::ZeroOne => f64::from(u8::from(p > 0.5) != y),
            Loss::Log => {
                if y == 1 {
                    -p.ln()
                } else {
                    -(1.0 - p).ln()
                }
            }
        }
    }
}

/// `p(x, s) = sigma(w . x + b_s)`, a probabilistic linear classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRule {
    pub w: Vec<f64>,
    pub b: [f64; 2],
}

impl LinearRule {
    pub fn random(dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            w: (0..dim).map(|_| rng.sample(StandardNormal)).collect(),
            b: [rng.sample(StandardNormal), rng.sample(StandardNormal)],
        }
    }

    pub fn prob(&self, x: &[f64], s: u8) -> f64 {
        let z: f64 = self.w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.b[usize::from(s)];
        logistic(z)
    }
}

impl DiscreteJointModel {
    pub fn new(points: [Vec<Vec<f64>>; 2], mass: [Vec<[f64; 2]>; 2]) -> Result<Self> {
        for s in 0..2 {
            if points[s].len() != mass[s].len() || points[s].is_empty() {
                return Err(invalid("mass", "one mass pair per support point is required"));
            }
        }
        let dim = points[0][0].len();
        if points.iter().flatten().any(|p| p.len() != dim) {
            return Err(invalid("points", "feature vectors differ in length"));
        }
        let mut total = 0.0;
        for m in mass.iter().flatten().flatten() {
            if !(*m >= 0.0 && m.is_finite()) {
                return Err(invalid("mass", "probabilities must be finite and non-negative"));
            }
            total += m;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid("mass", format!("total mass {total} is not 1")));
        }
        Ok(Self { points, mass })
    }

    /// `n_points` per group with `N(0, I)` features and masses drawn from a
    /// flat Dirichlet (normalized unit exponentials).
    pub fn random(n_points: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = Self::random_points(n_points, dim, &mut rng);
        let mut mass: [Vec<[f64; 2]>; 2] = Default::default();
        for group in &mut mass {
            for _ in 0..n_points {
                group.push([rng.sample(Exp1), rng.sample(Exp1)]);
            }
        }
        let total: f64 = mass.iter().flatten().flatten().sum();
        for m in mass.iter_mut().flatten().flatten() {
            *m /= total;
        }
        Self { points, mass }
    }

    /// Like [`Self::random`] but every subgroup carries exactly mass 1/4,
    /// so the subgroup imbalance is 1.
    pub fn random_balanced(n_points: usize, dim: usize, seed: u64) -> Self {
        let mut model = Self::random(n_points, dim, seed);
        let probs = model.subgroup_probs();
        for s in 0..2 {
            for cell in &mut model.mass[s] {
                for y in 0..2 {
                    cell[y] *= 0.25 / probs[Subgroup::new(y as u8, s as u8)];
                }
            }
        }
        model
    }

    fn random_points(n_points: usize, dim: usize, rng: &mut impl Rng) -> [Vec<Vec<f64>>; 2] {
        let mut points: [Vec<Vec<f64>>; 2] = Default::default();
        for group in &mut points {
            for _ in 0..n_points {
                group.push((0..dim).map(|_| rng.sample(StandardNormal)).collect());
            }
        }
        points
    }

    pub fn dim(&self) -> usize {
        self.points[0][0].len()
    }

    pub fn support_len(&self, s: u8) -> usize {
        self.points[usize::from(s)].len()
    }

    pub fn point(&self, s: u8, k: usize) -> &[f64] {
        &self.points[usize::from(s)][k]
    }

    pub fn mass(&self, s: u8, k: usize, y: u8) -> f64 {
        self.mass[usize::from(s)][k][usize::from(y)]
    }

    /// `P(x_k, S = s)`.
    pub fn point_mass(&self, s: u8, k: usize) -> f64 {
        let m = self.mass[usize::from(s)][k];
        m[0] + m[1]
    }

    /// Every `(s, k)` pair of the support.
    pub fn support(&self) -> impl Iterator<Item = (u8, usize)> + '_ {
        (0..2u8).flat_map(move |s| (0..self.support_len(s)).map(move |k| (s, k)))
    }

    pub fn subgroup_probs(&self) -> PerSubgroup<f64> {
        let mut p = PerSubgroup([0.0; 4]);
        for (s, k) in self.support() {
            for y in 0..2 {
                p[Subgroup::new(y, s)] += self.mass(s, k, y);
            }
        }
        p
    }

    /// `min p_ys / max p_ys`.
    pub fn alpha(&self) -> f64 {
        let p = self.subgroup_probs();
        let min = p.0.iter().copied().fold(f64::INFINITY, f64::min);
        let max = p.0.iter().copied().fold(0.0, f64::max);
        min / max
    }

    pub fn base_rate(&self) -> f64 {
        let p = self.subgroup_probs();
        p[Subgroup::new(1, 0)] + p[Subgroup::new(1, 1)]
    }

    /// `P(Y = 1 | x_k, S = s)`.
    pub fn eta(&self, s: u8, k: usize) -> f64 {
        let m = self.mass[usize::from(s)][k];
        m[1] / (m[0] + m[1])
    }

    /// Scales `(1,0)` cells by `beta_pos` and `(0,0)` cells by `beta_neg`,
    /// then renormalizes.
    pub fn biased(&self, beta_pos: f64, beta_neg: f64) -> Result<Self> {
        for (name, b) in [("beta_pos", beta_pos), ("beta_neg", beta_neg)] {
            if !(b > 0.0 && b <= 1.0) {
                return Err(invalid(name, format!("{b} not in (0, 1]")));
            }
        }
        let mut mass = self.mass.clone();
        for cell in &mut mass[0] {
            cell[0] *= beta_neg;
            cell[1] *= beta_pos;
        }
        let total: f64 = mass.iter().flatten().flatten().sum();
        for m in mass.iter_mut().flatten().flatten() {
            *m /= total;
        }
        Ok(Self {
            points: self.points.clone(),
            mass,
        })
    }

    /// 0/1 risk of the Bayes classifier, `sum min(P(x,0,s), P(x,1,s))`.
    pub fn bayes_risk(&self) -> f64 {
        self.support()
            .map(|(s, k)| self.mass(s, k, 0).min(self.mass(s, k, 1)))
            .sum()
    }

    /// `sum_{x,y,s} P(x,y,s) W_ys loss(p(x,s), y)` by a single pass over
    /// the support.
    pub fn expected_loss(
        &self,
        prob: &dyn Fn(u8, usize) -> f64,
        loss: Loss,
        weights: &PerSubgroup<f64>,
    ) -> f64 {
        let mut total = 0.0;
        for (s, k) in self.support() {
            let p = prob(s, k);
            for y in 0..2 {
                total += self.mass(s, k, y) * weights[Subgroup::new(y, s)] * loss.eval(p, y);
            }
        }
        total
    }

    /// Same quantity computed differently: for 0/1 loss from the
    /// mass-weighted confusion table, for log loss as
    /// `sum_ys W_ys p_ys E[loss | y, s]`.
    pub fn expected_loss_decomposed(
        &self,
        prob: &dyn Fn(u8, usize) -> f64,
        loss: Loss,
        weights: &PerSubgroup<f64>,
    ) -> f64 {
        match loss {
            Loss::ZeroOne => {
                // confusion[g][h] = P(Y=y, S=s, H=h)
                let mut confusion = PerSubgroup([[0.0f64; 2]; 4]);
                for (s, k) in self.support() {
                    let h = usize::from(prob(s, k) > 0.5);
                    for y in 0..2 {
                        confusion[Subgroup::new(y, s)][h] += self.mass(s, k, y);
                    }
                }
                Subgroup::ALL
                    .iter()
                    .map(|&g| weights[g] * confusion[g][usize::from(1 - g.y)])
                    .sum()
            }
            Loss::Log => {
                let probs = self.subgroup_probs();
                Subgroup::ALL
                    .iter()
                    .map(|&g| {
                        if probs[g] == 0.0 {
                            return 0.0;
                        }
                        let conditional: f64 = (0..self.support_len(g.s))
                            .map(|k| self.mass(g.s, k, g.y) / probs[g] * loss.eval(prob(g.s, k), g.y))
                            .sum();
                        weights[g] * probs[g] * conditional
                    })
                    .sum()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ONES: PerSubgroup<f64> = PerSubgroup([1.0; 4]);

    #[test]
    fn random_model_is_a_distribution() {
        let m = DiscreteJointModel::random(16, 3, 1);
        let total: f64 = m.subgroup_probs().0.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(m.support().count(), 32);
        assert!(m.alpha() > 0.0 && m.alpha() <= 1.0);
    }

    #[test]
    fn balanced_model_has_unit_alpha() {
        let m = DiscreteJointModel::random_balanced(16, 3, 2);
        assert!((m.alpha() - 1.0).abs() < 1e-12);
        for g in Subgroup::ALL {
            assert!((m.subgroup_probs()[g] - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn bias_leaves_conditionals_alone() {
        let m = DiscreteJointModel::random(8, 2, 3);
        let b = m.biased(0.3, 0.7).unwrap();
        let (p, q) = (m.subgroup_probs(), b.subgroup_probs());
        for (s, k) in m.support() {
            for y in 0..2 {
                let g = Subgroup::new(y, s);
                let a = m.mass(s, k, y) / p[g];
                let c = b.mass(s, k, y) / q[g];
                assert!((a - c).abs() < 1e-12);
            }
        }
        // Group 1 posteriors are untouched.
        for k in 0..8 {
            assert!((m.eta(1, k) - b.eta(1, k)).abs() < 1e-15);
        }
    }

    #[test]
    fn bayes_risk_matches_bayes_rule_loss() {
        let m = DiscreteJointModel::random(16, 3, 4);
        let risk = m.expected_loss(&|s, k| m.eta(s, k), Loss::ZeroOne, &ONES);
        assert!((risk - m.bayes_risk()).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_mass() {
        let pts: [Vec<Vec<f64>>; 2] = [vec![vec![0.0]], vec![vec![1.0]]];
        assert!(DiscreteJointModel::new(pts.clone(), [vec![[0.25, 0.25]], vec![[0.25, 0.25]]]).is_ok());
        assert!(DiscreteJointModel::new(pts.clone(), [vec![[0.25, 0.25]], vec![[0.25, 0.3]]]).is_err());
        assert!(DiscreteJointModel::new(pts, [vec![[-0.25, 0.75]], vec![[0.25, 0.25]]]).is_err());
    }

    proptest! {
        #[test]
        fn two_expectation_routes_agree(seed in any::<u64>(), log: bool, w in proptest::array::uniform4(0.1f64..5.0)) {
            let m = DiscreteJointModel::random(16, 3, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            let rule = LinearRule::random(3, &mut rng);
            let loss = if log { Loss::Log } else { Loss::ZeroOne };
            let weights = PerSubgroup(w);
            let prob = |s: u8, k: usize| rule.prob(m.point(s, k), s);
            let a = m.expected_loss(&prob, loss, &weights);
            let b = m.expected_loss_decomposed(&prob, loss, &weights);
            prop_assert!((a - b).abs() < 1e-12, "{} vs {}", a, b);
        }
    }
}
