//! Exponentiated-gradient reduction for equalized odds.
//!
//! Constraints are `gamma_{y,s}(h) = E[h | Y=y, S=s] - E[h | Y=y]` for both
//! labels and groups, each as a `+` and `-` pair, giving eight moments
//! that must stay below `eps`. The multiplier player runs multiplicative
//! weights on `theta` with `lambda_j = B exp(theta_j) / (1 + sum exp theta)`;
//! the learner best-responds with a cost-sensitive weighted logistic
//! regression. The returned classifier is the uniform mixture of the
//! best responses.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifiers::logistic::{design_matrix, fit_on_design, LinearScorer, LrConfig};
use crate::dataset::{subgroup_stats, LabeledDataset, PerSubgroup, Subgroup};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpgradConfig {
    pub eps: f64,
    pub iterations: usize,
    /// Cap `B` on the total multiplier mass.
    pub bound: f64,
    /// Multiplicative-weights rate at step `t` is `eta0 / sqrt(t)`.
    pub eta0: f64,
}

impl Default for ExpgradConfig {
    fn default() -> Self {
        Self {
            eps: 0.01,
            iterations: 50,
            bound: 10.0,
            eta0: 0.5,
        }
    }
}

/// Mixture of thresholded linear scorers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizedClassifier {
    pub components: Vec<(LinearScorer, f64)>,
}

impl RandomizedClassifier {
    pub fn new(components: Vec<(LinearScorer, f64)>) -> Result<Self> {
        if components.is_empty() {
            return Err(invalid("components", "mixture is empty"));
        }
        if components.iter().any(|(_, p)| !(*p >= 0.0)) {
            return Err(invalid("components", "negative mixture weight"));
        }
        let total: f64 = components.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid("components", format!("weights sum to {total}")));
        }
        Ok(Self { components })
    }

    /// Probability of predicting 1 on each row.
    pub fn expected_predictions(&self, ds: &LabeledDataset) -> Vec<f64> {
        let mut out = vec![0.0; ds.len()];
        for (scorer, p) in &self.components {
            for (o, h) in out.iter_mut().zip(scorer.predict(ds)) {
                *o += p * f64::from(h);
            }
        }
        out
    }

    /// One component drawn per row from a generator seeded by `seed`.
    pub fn predict(&self, ds: &LabeledDataset, seed: u64) -> Vec<u8> {
        let per_component: Vec<Vec<u8>> = self.components.iter().map(|(s, _)| s.predict(ds)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..ds.len())
            .map(|i| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (k, (_, p)) in self.components.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return per_component[k][i];
                    }
                }
                per_component[per_component.len() - 1][i]
            })
            .collect()
    }

    pub fn dump(&self, names: &[String]) -> String {
        let mut out = format!("components = {}\n", self.components.len());
        for (k, (scorer, p)) in self.components.iter().enumerate() {
            out.push_str(&format!("[{k}] weight = {p:e}\n"));
            for line in scorer.dump(names).lines() {
                out.push_str(&format!("[{k}] {line}\n"));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpgradFit {
    pub classifier: RandomizedClassifier,
    /// Largest constraint moment of the mixture on the training data,
    /// minus `eps`; positive values mean the tolerance was not met.
    pub violation: f64,
    pub within_tolerance: bool,
}

/// The eight signed moments `+gamma_{y,s}` and `-gamma_{y,s}` for
/// predictions `h` (values in `[0, 1]`), in canonical subgroup order.
fn moments(h: &[f64], ds: &LabeledDataset, counts: &PerSubgroup<usize>) -> [f64; 8] {
    let mut sums = PerSubgroup([0.0f64; 4]);
    for (i, &v) in h.iter().enumerate() {
        sums[ds.subgroup_of(i)] += v;
    }
    let mut out = [0.0; 8];
    for (k, g) in Subgroup::ALL.into_iter().enumerate() {
        let (a, b) = (Subgroup::new(g.y, 0), Subgroup::new(g.y, 1));
        let by_label = (sums[a] + sums[b]) / (counts[a] + counts[b]) as f64;
        let gamma = sums[g] / counts[g] as f64 - by_label;
        out[2 * k] = gamma;
        out[2 * k + 1] = -gamma;
    }
    out
}

pub fn train_expgrad(
    ds: &LabeledDataset,
    cfg: &ExpgradConfig,
    lr: &LrConfig,
) -> Result<ExpgradFit> {
    if cfg.iterations == 0 {
        return Err(invalid("iterations", "must be at least 1"));
    }
    let stats = subgroup_stats(ds);
    if let Some((g, _)) = stats.counts.iter().find(|&(_, c)| c == 0) {
        return Err(Error::EmptySubgroup(g));
    }
    let counts = stats.counts;
    let n = ds.len() as f64;
    let z: Array2<f64> = design_matrix(ds);
    let mut theta = [0.0f64; 8];
    let mut best: Vec<LinearScorer> = Vec::with_capacity(cfg.iterations);
    let mut avg_moments = [0.0f64; 8];
    let mut warm: Option<LinearScorer> = None;
    let mut labels = vec![0u8; ds.len()];
    let mut weights = vec![0.0f64; ds.len()];

    for t in 1..=cfg.iterations {
        let e: Vec<f64> = theta.iter().map(|v| v.exp()).collect();
        let denom = 1.0 + e.iter().sum::<f64>();
        let mult: Vec<f64> = e.iter().map(|v| cfg.bound * v / denom).collect();
        // Net multiplier on gamma_{y,s}.
        let mu = PerSubgroup::from_fn(|g| mult[2 * g.index()] - mult[2 * g.index() + 1]);

        for i in 0..ds.len() {
            let g = ds.subgroup_of(i);
            let (a, b) = (Subgroup::new(g.y, 0), Subgroup::new(g.y, 1));
            let n_label = (counts[a] + counts[b]) as f64;
            let fairness = mu[g] / counts[g] as f64 - (mu[a] + mu[b]) / n_label;
            // cost(h=1) - cost(h=0)
            let diff = (1.0 - 2.0 * f64::from(g.y)) / n + fairness;
            labels[i] = u8::from(diff < 0.0);
            weights[i] = diff.abs();
        }
        let fit = fit_on_design(&z, &labels, &weights, lr, warm.as_ref())?;
        let h: Vec<f64> = fit.scorer.predict(ds).into_iter().map(f64::from).collect();
        let m = moments(&h, ds, &counts);
        let rate = cfg.eta0 / (t as f64).sqrt();
        for j in 0..8 {
            theta[j] += rate * (m[j] - cfg.eps);
            avg_moments[j] += m[j];
        }
        warm = Some(fit.scorer.clone());
        best.push(fit.scorer);
    }

    let k = best.len() as f64;
    let worst = avg_moments.iter().map(|v| v / k).fold(f64::NEG_INFINITY, f64::max);
    let violation = worst - cfg.eps;
    let classifier = RandomizedClassifier::new(best.into_iter().map(|s| (s, 1.0 / k)).collect())?;
    Ok(ExpgradFit {
        classifier,
        violation,
        within_tolerance: violation <= 0.0,
    })
}
