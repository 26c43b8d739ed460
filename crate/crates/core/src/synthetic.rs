//! Subgroup-conditional isotropic Gaussian data with an analytic posterior.
//!
//! Each subgroup `(y, s)` has prior `p_ys` and class-conditional
//! `x | y, s ~ N(mu_ys, sigma^2 I)`. Mean entries are drawn once from
//! `U(0, 1)`. Because the class-conditionals are untouched by
//! under-representation, the biased distribution is the same model with
//! reweighted priors, which makes the posterior of any bias setting exact.

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bias::BiasSetting;
use crate::classifiers::plugin::threshold_predict;
use crate::dataset::{LabeledDataset, PerSubgroup, Subgroup};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSubgroupModel {
    dim: usize,
    means: PerSubgroup<Array1<f64>>,
    sigma: f64,
    priors: PerSubgroup<f64>,
}

/// Named size presets for the synthetic experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticProfile {
    pub dim: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub sigma: f64,
}

impl SyntheticProfile {
    pub const DESK: SyntheticProfile = SyntheticProfile {
        dim: 20,
        n_train: 5000,
        n_test: 2000,
        sigma: 1.0,
    };
    pub const PAPER: SyntheticProfile = SyntheticProfile {
        dim: 100,
        n_train: 20_000,
        n_test: 5000,
        sigma: 1.0,
    };

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::DESK),
            "paper" | "full" => Ok(Self::PAPER),
            other => Err(invalid("profile", format!("unknown synthetic profile `{other}`"))),
        }
    }
}

pub const UNIFORM_PRIORS: PerSubgroup<f64> = PerSubgroup([0.25; 4]);

fn validate_priors(priors: &PerSubgroup<f64>) -> Result<()> {
    if priors.0.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
        return Err(invalid("priors", "every prior must be positive"));
    }
    let total: f64 = priors.0.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(invalid("priors", format!("priors sum to {total}, not 1")));
    }
    Ok(())
}

/// Draws the four mean vectors from the seeded generator.
pub fn make_model(
    dim: usize,
    sigma: f64,
    priors: PerSubgroup<f64>,
    seed: u64,
) -> Result<GaussianSubgroupModel> {
    if dim == 0 {
        return Err(invalid("dim", "must be at least 1"));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid("sigma", format!("{sigma} is not positive")));
    }
    validate_priors(&priors)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means = PerSubgroup(
        [(); 4].map(|_| Array1::from_shape_fn(dim, |_| rng.random::<f64>())),
    );
    Ok(GaussianSubgroupModel {
        dim,
        means,
        sigma,
        priors,
    })
}

impl GaussianSubgroupModel {
    /// Model with explicit means, mainly for closed-form checks.
    pub fn from_parts(
        means: PerSubgroup<Array1<f64>>,
        sigma: f64,
        priors: PerSubgroup<f64>,
    ) -> Result<Self> {
        let dim = means[Subgroup::new(0, 0)].len();
        if dim == 0 || means.0.iter().any(|m| m.len() != dim) {
            return Err(invalid("means", "all means need the same positive length"));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(invalid("sigma", format!("{sigma} is not positive")));
        }
        validate_priors(&priors)?;
        Ok(Self {
            dim,
            means,
            sigma,
            priors,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn priors(&self) -> &PerSubgroup<f64> {
        &self.priors
    }

    pub fn mean(&self, g: Subgroup) -> ArrayView1<'_, f64> {
        self.means[g].view()
    }

    /// `P(Y = 1)` under the model.
    pub fn base_rate(&self) -> f64 {
        self.priors[Subgroup::new(1, 0)] + self.priors[Subgroup::new(1, 1)]
    }

    /// Draws `n` rows: `(y, s)` from the priors, then `x ~ N(mu_ys, sigma^2 I)`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<LabeledDataset> {
        if n == 0 {
            return Err(invalid("n", "must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut features = Array2::<f64>::zeros((n, self.dim));
        let mut labels = Vec::with_capacity(n);
        let mut groups = Vec::with_capacity(n);
        for i in 0..n {
            let g = self.draw_subgroup(rng.random::<f64>());
            labels.push(g.y);
            groups.push(g.s);
            let mu = &self.means[g];
            for (j, x) in features.row_mut(i).iter_mut().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                *x = mu[j] + self.sigma * z;
            }
        }
        let names = (0..self.dim).map(|j| format!("x{j}")).collect();
        LabeledDataset::new(features, labels, groups, names)
    }

    fn draw_subgroup(&self, u: f64) -> Subgroup {
        let mut acc = 0.0;
        for g in Subgroup::ALL {
            acc += self.priors[g];
            if u < acc {
                return g;
            }
        }
        Subgroup::new(1, 1)
    }

    /// `log P(Y=1 | x, s) - log P(Y=0 | x, s)`.
    pub fn log_odds(&self, x: ArrayView1<'_, f64>, s: u8) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let pos = Subgroup::new(1, s);
        let neg = Subgroup::new(0, s);
        let d_pos = sq_dist(x, self.means[pos].view());
        let d_neg = sq_dist(x, self.means[neg].view());
        self.priors[pos].ln() - self.priors[neg].ln()
            + (d_neg - d_pos) / (2.0 * self.sigma * self.sigma)
    }

    /// `eta(x, s) = P(Y = 1 | X = x, S = s)`.
    pub fn posterior_eta(&self, x: ArrayView1<'_, f64>, s: u8) -> f64 {
        logistic(self.log_odds(x, s))
    }

    /// `P(Y = label | X = x, S = s)`.
    pub fn posterior(&self, x: ArrayView1<'_, f64>, s: u8, label: u8) -> f64 {
        let lo = self.log_odds(x, s);
        if label == 1 {
            logistic(lo)
        } else {
            logistic(-lo)
        }
    }

    /// Priors reweighted by `beta_pos` on `(1,0)` and `beta_neg` on `(0,0)`,
    /// renormalized; means and sigma unchanged.
    pub fn biased_model(&self, beta_pos: f64, beta_neg: f64) -> Result<Self> {
        for (name, b) in [("beta_pos", beta_pos), ("beta_neg", beta_neg)] {
            if !(b > 0.0 && b <= 1.0) {
                return Err(invalid(name, format!("{b} not in (0, 1]")));
            }
        }
        let mut w = self.priors;
        w[Subgroup::new(1, 0)] *= beta_pos;
        w[Subgroup::new(0, 0)] *= beta_neg;
        let z: f64 = w.0.iter().sum();
        let priors = PerSubgroup(w.0.map(|p| p / z));
        Ok(Self {
            priors,
            ..self.clone()
        })
    }

    /// Posterior of the training distribution produced by `setting`:
    /// under-representation reweights the priors, and flipping a fraction
    /// `nu` of `(1,0)` labels scales `eta(x, 0)` by `1 - nu`.
    pub fn posterior_eta_under(&self, setting: &BiasSetting, x: ArrayView1<'_, f64>, s: u8) -> f64 {
        let mut lo = self.log_odds(x, s);
        if s == 0 {
            lo += setting.beta_pos.ln() - setting.beta_neg.ln();
        }
        let eta = logistic(lo);
        if s == 0 {
            (1.0 - setting.nu) * eta
        } else {
            eta
        }
    }

    /// `1{eta > c}`, with `tie_break` returned when `eta == c`.
    pub fn bayes_predict(&self, x: ArrayView1<'_, f64>, s: u8, threshold: f64, tie_break: u8) -> u8 {
        threshold_predict(self.posterior_eta(x, s), threshold, tie_break)
    }
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Numerically stable `1 / (1 + e^-z)`.
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::subgroup_stats;
    use ndarray::array;

    fn scalar_model(mu0: f64, mu1: f64, sigma: f64) -> GaussianSubgroupModel {
        GaussianSubgroupModel::from_parts(
            PerSubgroup([array![mu0], array![mu0], array![mu1], array![mu1]]),
            sigma,
            UNIFORM_PRIORS,
        )
        .unwrap()
    }

    /// Direct density ratio without log-space tricks.
    fn eta_direct(m: &GaussianSubgroupModel, x: &[f64], s: u8) -> f64 {
        let dens = |g: Subgroup| {
            let d: f64 = x
                .iter()
                .zip(m.mean(g).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            m.priors()[g] * (-d / (2.0 * m.sigma() * m.sigma())).exp()
        };
        let p1 = dens(Subgroup::new(1, s));
        p1 / (p1 + dens(Subgroup::new(0, s)))
    }

    #[test]
    fn means_lie_in_unit_interval_and_are_seeded() {
        let m = make_model(100, 1.0, UNIFORM_PRIORS, 3).unwrap();
        for g in Subgroup::ALL {
            assert!(m.mean(g).iter().all(|&v| (0.0..1.0).contains(&v)));
        }
        assert_eq!(m, make_model(100, 1.0, UNIFORM_PRIORS, 3).unwrap());
        assert_ne!(m, make_model(100, 1.0, UNIFORM_PRIORS, 4).unwrap());
        assert_eq!(make_model(1, 1.0, UNIFORM_PRIORS, 3).unwrap().dim(), 1);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(make_model(0, 1.0, UNIFORM_PRIORS, 0).is_err());
        assert!(make_model(2, 0.0, UNIFORM_PRIORS, 0).is_err());
        assert!(make_model(2, 1.0, PerSubgroup([0.5, 0.5, 0.0, 0.0]), 0).is_err());
        assert!(make_model(2, 1.0, PerSubgroup([0.3; 4]), 0).is_err());
    }

    #[test]
    fn eta_symmetric_point_is_half() {
        let m = scalar_model(0.0, 1.0, 1.0);
        assert_eq!(m.posterior_eta(array![0.5].view(), 0), 0.5);
    }

    #[test]
    fn eta_scalar_closed_form() {
        // log-odds = (x - 0.5) * (mu1 - mu0) / sigma^2 = 0.5 at x = 1.
        let m = scalar_model(0.0, 1.0, 1.0);
        let direct = eta_direct(&m, &[1.0], 0);
        let eta = m.posterior_eta(array![1.0].view(), 0);
        assert!((direct - 0.622_459_331_201_854_6).abs() < 1e-12);
        assert!((eta - direct).abs() < 1e-14);
    }

    #[test]
    fn eta_saturates_far_from_boundary() {
        let m = scalar_model(0.0, 10.0, 1.0);
        let x = array![10.0];
        let eta = m.posterior_eta(x.view(), 1);
        // Direct ratio: exp(-50) relative weight of the negative class.
        let direct = eta_direct(&m, &[10.0], 1);
        assert!((1.0 - eta) < 1e-6);
        assert!((eta - direct).abs() < 1e-15);
    }

    #[test]
    fn posteriors_sum_to_one() {
        let m = make_model(5, 0.7, PerSubgroup([0.1, 0.2, 0.3, 0.4]), 9).unwrap();
        let ds = m.sample(200, 1).unwrap();
        for i in 0..ds.len() {
            let x = ds.row(i);
            let s = ds.groups()[i];
            let total = m.posterior(x, s, 1) + m.posterior(x, s, 0);
            assert!((total - 1.0).abs() <= f64::EPSILON);
        }
    }

    #[test]
    fn biased_priors() {
        let m = make_model(3, 1.0, UNIFORM_PRIORS, 0).unwrap();
        assert_eq!(m.biased_model(1.0, 1.0).unwrap().priors(), m.priors());
        let half = m.biased_model(0.5, 0.5).unwrap();
        let p = half.priors();
        assert!((p[Subgroup::new(1, 0)] / (p[Subgroup::new(1, 0)] + p[Subgroup::new(0, 0)]) - 0.5).abs() < 1e-15);
        let b = m.biased_model(0.5, 1.0).unwrap();
        let expect = [2.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0, 2.0 / 7.0];
        for (got, want) in b.priors().0.iter().zip(expect) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_matches_priors() {
        let priors = PerSubgroup([0.1, 0.2, 0.3, 0.4]);
        let m = make_model(2, 1.0, priors, 1).unwrap();
        assert_eq!(m.sample(50, 8).unwrap(), m.sample(50, 8).unwrap());
        assert_eq!(m.sample(1, 8).unwrap().len(), 1);
        let n = 100_000;
        let st = subgroup_stats(&m.sample(n, 2).unwrap());
        for g in Subgroup::ALL {
            let p = priors[g];
            let band = 3.0 * (p * (1.0 - p) / n as f64).sqrt();
            assert!((st.probs[g] - p).abs() <= band, "{g}: {} vs {p}", st.probs[g]);
        }
    }

    #[test]
    fn biased_sampling_matches_injection_in_expectation() {
        use crate::bias::inject_under_representation;
        let m = make_model(2, 1.0, UNIFORM_PRIORS, 5).unwrap();
        let n = 100_000;
        let biased = m.biased_model(0.4, 0.7).unwrap();
        let direct = subgroup_stats(&biased.sample(n, 1).unwrap());
        let injected =
            subgroup_stats(&inject_under_representation(&m.sample(n, 2).unwrap(), 0.4, 0.7, 3).unwrap());
        for g in Subgroup::ALL {
            let p = biased.priors()[g];
            let band = 3.0 * (p * (1.0 - p) / injected.total() as f64).sqrt() * 2.0;
            assert!((direct.probs[g] - injected.probs[g]).abs() <= band);
        }
    }

    #[test]
    fn bayes_predict_threshold_and_ties() {
        let m = scalar_model(0.0, 1.0, 1.0);
        let mid = array![0.5];
        assert_eq!(m.bayes_predict(mid.view(), 0, 0.5, 1), 1);
        assert_eq!(m.bayes_predict(mid.view(), 0, 0.5, 0), 0);
        assert_eq!(m.bayes_predict(array![-3.0].view(), 0, 0.0, 0), 1);
        assert_eq!(m.bayes_predict(array![0.8].view(), 1, 0.5, 0), 1);
        assert_eq!(m.bayes_predict(array![0.2].view(), 1, 0.5, 1), 0);
    }

    #[test]
    fn posterior_under_label_bias() {
        let m = scalar_model(0.0, 1.0, 1.0);
        let x = array![0.9];
        let s = BiasSetting::new(1.0, 1.0, 0.3).unwrap();
        let eta = m.posterior_eta(x.view(), 0);
        assert!((m.posterior_eta_under(&s, x.view(), 0) - 0.7 * eta).abs() < 1e-15);
        assert_eq!(m.posterior_eta_under(&s, x.view(), 1), m.posterior_eta(x.view(), 1));
        let b = BiasSetting::new(0.3, 0.6, 0.0).unwrap();
        let via_model = m.biased_model(0.3, 0.6).unwrap().posterior_eta(x.view(), 0);
        assert!((m.posterior_eta_under(&b, x.view(), 0) - via_model).abs() < 1e-14);
    }
}
