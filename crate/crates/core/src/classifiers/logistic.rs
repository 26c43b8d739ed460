//! Weighted L2-regularized logistic regression.
//!
//! The objective is the weight-normalized log loss
//! `(1 / sum w) * sum_i w_i * logloss(z_i, y_i) + (l2 / 2) * |w|^2`
//! over the features plus the group column; the intercept is not
//! penalized. Normalizing by `sum w` makes the minimizer invariant to a
//! global rescaling of the sample weights. Minimization is damped Newton
//! with Armijo backtracking from a zero start, so every accepted step
//! lowers the objective.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::classifiers::plugin::threshold_predict;
use crate::dataset::LabeledDataset;
use crate::error::{invalid, Error, Result};
use crate::synthetic::logistic;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrConfig {
    pub l2: f64,
    pub max_iter: usize,
    /// Stop once the Euclidean norm of the gradient falls below this.
    pub tol: f64,
}

impl Default for LrConfig {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            max_iter: 2000,
            tol: 1e-8,
        }
    }
}

/// `sigma(w . [x, s] + b)` as an estimate of `eta(x, s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearScorer {
    /// Feature weights followed by the group-column weight.
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LinearScorer {
    pub fn zeros(n_features: usize) -> Self {
        Self {
            weights: vec![0.0; n_features + 1],
            intercept: 0.0,
        }
    }

    pub fn n_features(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn logit(&self, x: ArrayView1<'_, f64>, s: u8) -> f64 {
        let d = self.n_features();
        let mut z = self.intercept + self.weights[d] * f64::from(s);
        for (w, v) in self.weights[..d].iter().zip(x.iter()) {
            z += w * v;
        }
        z
    }

    pub fn eta(&self, x: ArrayView1<'_, f64>, s: u8) -> f64 {
        logistic(self.logit(x, s))
    }

    pub fn eta_all(&self, ds: &LabeledDataset) -> Vec<f64> {
        (0..ds.len())
            .map(|i| self.eta(ds.row(i), ds.groups()[i]))
            .collect()
    }

    /// `1{eta > 1/2}`, positive at the boundary.
    pub fn predict(&self, ds: &LabeledDataset) -> Vec<u8> {
        self.eta_all(ds)
            .into_iter()
            .map(|e| threshold_predict(e, 0.5, 1))
            .collect()
    }

    fn to_params(&self) -> Array1<f64> {
        let mut p = Array1::zeros(self.weights.len() + 1);
        for (dst, &w) in p.iter_mut().zip(&self.weights) {
            *dst = w;
        }
        p[self.weights.len()] = self.intercept;
        p
    }

    fn from_params(p: &Array1<f64>) -> Self {
        let k = p.len() - 1;
        Self {
            weights: p.iter().take(k).copied().collect(),
            intercept: p[k],
        }
    }

    /// `key = value` lines, one per parameter.
    pub fn dump(&self, names: &[String]) -> String {
        let mut out = String::new();
        out.push_str(&format!("intercept = {:e}\n", self.intercept));
        for (j, w) in self.weights.iter().enumerate() {
            let name = names.get(j).map(String::as_str).unwrap_or("group");
            out.push_str(&format!("w.{name} = {w:e}\n"));
        }
        out
    }
}

/// Result of a fit, with convergence diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrFit {
    pub scorer: LinearScorer,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Objective value at the start and after every line-searched step.
    pub objective_trace: Vec<f64>,
}

/// Rows `[x, s, 1]`.
pub fn design_matrix(ds: &LabeledDataset) -> Array2<f64> {
    let (n, d) = (ds.len(), ds.n_features());
    let mut z = Array2::zeros((n, d + 2));
    z.slice_mut(ndarray::s![.., ..d]).assign(ds.features());
    for (i, &s) in ds.groups().iter().enumerate() {
        z[[i, d]] = f64::from(s);
        z[[i, d + 1]] = 1.0;
    }
    z
}

/// The fitting problem on a fixed design.
pub struct WeightedLogLoss<'a> {
    z: &'a Array2<f64>,
    y: Array1<f64>,
    w: Array1<f64>,
    l2: f64,
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl<'a> WeightedLogLoss<'a> {
    pub fn new(z: &'a Array2<f64>, labels: &[u8], weights: &[f64], l2: f64) -> Result<Self> {
        let n = z.nrows();
        if labels.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: labels.len(),
            });
        }
        if weights.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: weights.len(),
            });
        }
        if weights.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(invalid("sample_weights", "must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(invalid("sample_weights", "all weights are zero"));
        }
        if !(l2 >= 0.0 && l2.is_finite()) {
            return Err(invalid("l2", format!("{l2} is not a valid penalty")));
        }
        Ok(Self {
            z,
            y: labels.iter().map(|&v| f64::from(v)).collect(),
            w: weights.iter().map(|v| v / total).collect(),
            l2,
        })
    }

    fn penalized(&self, p: &Array1<f64>) -> f64 {
        let k = p.len() - 1;
        0.5 * self.l2 * p.iter().take(k).map(|v| v * v).sum::<f64>()
    }

    pub fn value(&self, p: &Array1<f64>) -> f64 {
        let logits = self.z.dot(p);
        let mut loss = 0.0;
        for ((&zi, &yi), &wi) in logits.iter().zip(&self.y).zip(&self.w) {
            if wi > 0.0 {
                loss += wi * (softplus(zi) - yi * zi);
            }
        }
        loss + self.penalized(p)
    }

    pub fn gradient(&self, p: &Array1<f64>) -> Array1<f64> {
        let logits = self.z.dot(p);
        let r: Array1<f64> = logits
            .iter()
            .zip(&self.y)
            .zip(&self.w)
            .map(|((&zi, &yi), &wi)| wi * (logistic(zi) - yi))
            .collect();
        let mut g = self.z.t().dot(&r);
        let k = p.len() - 1;
        for j in 0..k {
            g[j] += self.l2 * p[j];
        }
        g
    }

    fn hessian(&self, p: &Array1<f64>) -> Array2<f64> {
        let logits = self.z.dot(p);
        let root: Array1<f64> = logits
            .iter()
            .zip(&self.w)
            .map(|(&zi, &wi)| {
                let q = logistic(zi);
                (wi * q * (1.0 - q)).sqrt()
            })
            .collect();
        let scaled = self.z * &root.insert_axis(Axis(1));
        let mut h = scaled.t().dot(&scaled);
        let k = p.len() - 1;
        for j in 0..k {
            h[[j, j]] += self.l2;
        }
        h
    }
}

fn newton_direction(h: &Array2<f64>, g: &Array1<f64>) -> Array1<f64> {
    let k = g.len();
    let hm = DMatrix::from_fn(k, k, |i, j| h[[i, j]]);
    let gv = DVector::from_iterator(k, g.iter().map(|v| -v));
    let scale = (0..k).map(|i| h[[i, i]].abs()).fold(0.0, f64::max).max(1e-300);
    let mut damping = 0.0;
    loop {
        let mut m = hm.clone();
        for i in 0..k {
            m[(i, i)] += damping;
        }
        if let Some(ch) = m.cholesky() {
            let d = ch.solve(&gv);
            if d.iter().all(|v| v.is_finite()) {
                return d.iter().copied().collect();
            }
        }
        damping = if damping == 0.0 {
            1e-12 * scale
        } else {
            damping * 10.0
        };
        if damping > 1e12 * scale {
            // Fall back to steepest descent.
            return g.mapv(|v| -v);
        }
    }
}

/// Fits from a zero start.
pub fn train_weighted_lr(ds: &LabeledDataset, sample_weights: &[f64], cfg: &LrConfig) -> Result<LrFit> {
    train_weighted_lr_from(ds, sample_weights, cfg, None)
}

/// Fits from `init` when given, else from zero.
pub fn train_weighted_lr_from(
    ds: &LabeledDataset,
    sample_weights: &[f64],
    cfg: &LrConfig,
    init: Option<&LinearScorer>,
) -> Result<LrFit> {
    let z = design_matrix(ds);
    fit_on_design(&z, ds.labels(), sample_weights, cfg, init)
}

/// Fits against a precomputed [`design_matrix`].
pub fn fit_on_design(
    z: &Array2<f64>,
    labels: &[u8],
    sample_weights: &[f64],
    cfg: &LrConfig,
    init: Option<&LinearScorer>,
) -> Result<LrFit> {
    let problem = WeightedLogLoss::new(z, labels, sample_weights, cfg.l2)?;
    let k = z.ncols();
    let mut p = match init {
        Some(s) if s.weights.len() + 1 == k => s.to_params(),
        Some(s) => {
            return Err(Error::LengthMismatch {
                expected: k - 1,
                got: s.weights.len(),
            })
        }
        None => Array1::zeros(k),
    };
    let mut f = problem.value(&p);
    let mut trace = vec![f];
    let mut g = problem.gradient(&p);
    let mut gnorm = g.dot(&g).sqrt();
    let mut iterations = 0;
    while gnorm >= cfg.tol && iterations < cfg.max_iter {
        iterations += 1;
        let d = newton_direction(&problem.hessian(&p), &g);
        let slope = g.dot(&d);
        let d = if slope < 0.0 { d } else { g.mapv(|v| -v) };
        let slope = g.dot(&d);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = &p + &(t * &d);
            let fc = problem.value(&cand);
            if fc < f && fc <= f + 1e-4 * t * slope {
                accepted = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, fc)) = accepted else {
            break;
        };
        p = cand;
        f = fc;
        trace.push(f);
        g = problem.gradient(&p);
        gnorm = g.dot(&g).sqrt();
    }
    // Near the optimum the objective is flat to rounding, so the Armijo
    // test can stall, and a gradient below `tol` can still leave the
    // parameters far off when the curvature is tiny. Finish with a few
    // undamped Newton steps judged by the gradient alone; they converge
    // quadratically and are not part of the trace.
    let polish = if iterations < cfg.max_iter { 5 } else { 0 };
    for _ in 0..polish {
        let cand = &p + &newton_direction(&problem.hessian(&p), &g);
        let gc = problem.gradient(&cand);
        let gc_norm = gc.dot(&gc).sqrt();
        if !(gc_norm < gnorm) {
            break;
        }
        p = cand;
        g = gc;
        gnorm = gc_norm;
    }
    Ok(LrFit {
        scorer: LinearScorer::from_params(&p),
        converged: gnorm < cfg.tol,
        iterations,
        grad_norm: gnorm,
        objective_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn ds(features: Array2<f64>, labels: Vec<u8>, groups: Vec<u8>) -> LabeledDataset {
        let names = (0..features.ncols()).map(|j| format!("f{j}")).collect();
        LabeledDataset::new(features, labels, groups, names).unwrap()
    }

    fn five_points() -> LabeledDataset {
        ds(
            array![[0.3, -1.0], [1.2, 0.4], [-0.7, 0.9], [2.0, 1.5], [0.1, 0.1]],
            vec![0, 1, 0, 1, 1],
            vec![0, 1, 1, 0, 0],
        )
    }

    #[test]
    fn separable_pair_is_fit_exactly() {
        let d = ds(array![[-1.0], [1.0]], vec![0, 1], vec![0, 0]);
        let fit = train_weighted_lr(&d, &[1.0, 1.0], &LrConfig::default()).unwrap();
        assert_eq!(fit.scorer.predict(&d), vec![0, 1]);
    }

    #[test]
    fn single_class_weighting_predicts_that_class() {
        let d = five_points();
        let w: Vec<f64> = d.labels().iter().map(|&y| f64::from(y)).collect();
        let fit = train_weighted_lr(&d, &w, &LrConfig::default()).unwrap();
        assert!(fit.scorer.predict(&d).iter().all(|&p| p == 1));
        let w: Vec<f64> = d.labels().iter().map(|&y| f64::from(1 - y)).collect();
        let fit = train_weighted_lr(&d, &w, &LrConfig::default()).unwrap();
        assert!(fit.scorer.predict(&d).iter().all(|&p| p == 0));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let d = five_points();
        let z = design_matrix(&d);
        let w = [1.0, 2.0, 0.5, 1.0, 3.0];
        let problem = WeightedLogLoss::new(&z, d.labels(), &w, 1e-4).unwrap();
        let fit = fit_on_design(&z, d.labels(), &w, &LrConfig::default(), None).unwrap();
        assert!(fit.converged);
        let mut points = vec![fit.scorer.to_params()];
        points.push(array![0.3, -0.2, 0.5, 0.1]);
        for p in points {
            let g = problem.gradient(&p);
            let h = 1e-6;
            for j in 0..p.len() {
                let mut up = p.clone();
                let mut dn = p.clone();
                up[j] += h;
                dn[j] -= h;
                let fd = (problem.value(&up) - problem.value(&dn)) / (2.0 * h);
                assert!((fd - g[j]).abs() < 1e-6, "component {j}: {fd} vs {}", g[j]);
            }
        }
    }

    #[test]
    fn zero_or_negative_weights_are_rejected() {
        let d = five_points();
        let cfg = LrConfig::default();
        assert!(train_weighted_lr(&d, &[0.0; 5], &cfg).is_err());
        assert!(train_weighted_lr(&d, &[1.0, -1.0, 1.0, 1.0, 1.0], &cfg).is_err());
        assert!(train_weighted_lr(&d, &[1.0; 4], &cfg).is_err());
    }

    #[test]
    fn iteration_cap_is_flagged() {
        let d = five_points();
        let cfg = LrConfig {
            max_iter: 1,
            ..LrConfig::default()
        };
        let fit = train_weighted_lr(&d, &[1.0; 5], &cfg).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.iterations, 1);
        assert!(fit.grad_norm > cfg.tol);
    }

    #[test]
    fn warm_start_reaches_the_same_optimum() {
        let d = five_points();
        let cfg = LrConfig::default();
        let cold = train_weighted_lr(&d, &[1.0; 5], &cfg).unwrap();
        let warm = train_weighted_lr_from(&d, &[1.0; 5], &cfg, Some(&cold.scorer)).unwrap();
        assert_eq!(warm.iterations, 0);
        assert!((warm.scorer.intercept - cold.scorer.intercept).abs() < 1e-10);
        for (a, b) in warm.scorer.weights.iter().zip(&cold.scorer.weights) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn dump_lists_every_parameter() {
        let s = LinearScorer {
            weights: vec![0.5, -1.0, 2.0],
            intercept: 0.25,
        };
        let text = s.dump(&["a".into(), "b".into()]);
        assert_eq!(text.lines().count(), 4);
        assert!(text.contains("w.group = 2e0"));
    }

    fn small_problem() -> impl Strategy<Value = (Vec<[f64; 2]>, Vec<u8>, Vec<u8>, Vec<f64>)> {
        (3usize..25).prop_flat_map(|n| {
            (
                proptest::collection::vec(proptest::array::uniform2(-3.0f64..3.0), n),
                proptest::collection::vec(0u8..2, n),
                proptest::collection::vec(0u8..2, n),
                proptest::collection::vec(0.1f64..5.0, n),
            )
        })
    }

    fn build(x: &[[f64; 2]], y: Vec<u8>, s: Vec<u8>) -> LabeledDataset {
        let f = Array2::from_shape_fn((x.len(), 2), |(i, j)| x[i][j]);
        ds(f, y, s)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn objective_never_increases((x, y, s, w) in small_problem()) {
            let d = build(&x, y, s);
            let fit = train_weighted_lr(&d, &w, &LrConfig::default()).unwrap();
            for pair in fit.objective_trace.windows(2) {
                prop_assert!(pair[1] <= pair[0]);
            }
        }

        #[test]
        fn weight_scale_does_not_move_the_optimum((x, y, s, w) in small_problem(), k in 0.01f64..100.0) {
            let d = build(&x, y, s);
            let cfg = LrConfig::default();
            let a = train_weighted_lr(&d, &w, &cfg).unwrap();
            let scaled: Vec<f64> = w.iter().map(|v| v * k).collect();
            let b = train_weighted_lr(&d, &scaled, &cfg).unwrap();
            prop_assert!(a.converged && b.converged);
            prop_assert!((a.scorer.intercept - b.scorer.intercept).abs() < 1e-8);
            for (u, v) in a.scorer.weights.iter().zip(&b.scorer.weights) {
                prop_assert!((u - v).abs() < 1e-8);
            }
        }
    }
}
