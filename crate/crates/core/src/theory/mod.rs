//! Numerical checks of the bias-robustness guarantees.
//!
//! Expectations on [`DiscreteJointModel`] are exact sums over the support;
//! posterior identities on the Gaussian model are checked pointwise.

pub mod discrete;
pub mod verify;

use ndarray::ArrayView1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::classifiers::plugin::{plugin_fair_predict, threshold_predict, Constraint, TradeoffParams};
use crate::classifiers::weights::{
    corrected_weights, corrected_weights_eod_biased_mass, CostWeights, ReweighWeights,
};
use crate::dataset::{PerSubgroup, Subgroup};
use crate::error::{invalid, Error, Result};
use crate::synthetic::GaussianSubgroupModel;

pub use discrete::{DiscreteJointModel, LinearRule, Loss};

/// Slack used by every exact-sum comparison.
pub const SLACK: f64 = 1e-12;

/// Which underprivileged subgroup the bias removes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BiasMode {
    /// Scale `(1,0)` by `beta`.
    Pos,
    /// Scale `(0,0)` by `beta`.
    Neg,
}

impl BiasMode {
    pub const BOTH: [BiasMode; 2] = [BiasMode::Pos, BiasMode::Neg];

    /// `(beta_pos, beta_neg)` for this mode.
    pub fn betas(self, beta: f64) -> (f64, f64) {
        match self {
            BiasMode::Pos => (beta, 1.0),
            BiasMode::Neg => (1.0, beta),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BiasMode::Pos => "pos",
            BiasMode::Neg => "neg",
        }
    }
}

fn check_positive_subgroups(model: &DiscreteJointModel) -> Result<()> {
    match model.subgroup_probs().iter().find(|&(_, p)| p <= 0.0) {
        Some((g, _)) => Err(Error::EmptySubgroup(g)),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandwichResult {
    /// `(alpha^2 / 4) E_D[L]`.
    pub lhs: f64,
    /// `E_{D_beta}[W L]`.
    pub mid: f64,
    /// `(4 / alpha) E_D[L]`.
    pub rhs: f64,
    pub alpha: f64,
    pub holds: bool,
}

/// Compares the reweighed loss on the biased model with the unweighted
/// loss on the original. `W` comes from the biased model's marginals.
pub fn check_sandwich(
    model: &DiscreteJointModel,
    rule: &LinearRule,
    beta: f64,
    mode: BiasMode,
    loss: Loss,
) -> Result<SandwichResult> {
    check_positive_subgroups(model)?;
    let (bp, bn) = mode.betas(beta);
    let biased = model.biased(bp, bn)?;
    let w = ReweighWeights::from_probs(&biased.subgroup_probs())?;
    let prob = |s: u8, k: usize| rule.prob(model.point(s, k), s);
    let plain = model.expected_loss(&prob, loss, &PerSubgroup([1.0; 4]));
    let mid = biased.expected_loss(&prob, loss, &w.0);
    let alpha = model.alpha();
    let lhs = alpha * alpha / 4.0 * plain;
    let rhs = 4.0 / alpha * plain;
    Ok(SandwichResult {
        lhs,
        mid,
        rhs,
        alpha,
        holds: lhs <= mid + SLACK && mid <= rhs + SLACK,
    })
}

/// Per-group threshold classifier on a discrete model: group `s` accepts
/// the support points whose posterior rank is at least `cut[s]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupCuts {
    pub cut: [usize; 2],
}

/// Distinct posterior values of group `s`, ascending; thresholds `t_j`
/// accept `eta >= t_j`, and index `len` accepts nothing.
fn distinct_etas(model: &DiscreteJointModel, s: u8) -> Vec<f64> {
    let mut v: Vec<f64> = (0..model.support_len(s)).map(|k| model.eta(s, k)).collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Every group-threshold classifier over the posterior values of `model`.
pub struct ThresholdFamily {
    levels: [Vec<f64>; 2],
}

impl ThresholdFamily {
    pub fn new(model: &DiscreteJointModel) -> Self {
        Self {
            levels: [distinct_etas(model, 0), distinct_etas(model, 1)],
        }
    }

    /// Number of thresholds for group `s` (including "accept nothing").
    pub fn size(&self, s: u8) -> usize {
        self.levels[usize::from(s)].len() + 1
    }

    pub fn predict(&self, cuts: GroupCuts, s: u8, eta: f64) -> u8 {
        let levels = &self.levels[usize::from(s)];
        let c = cuts.cut[usize::from(s)];
        u8::from(c < levels.len() && eta >= levels[c])
    }

    pub fn all(&self) -> impl Iterator<Item = GroupCuts> + '_ {
        (0..self.size(0)).flat_map(move |a| (0..self.size(1)).map(move |b| GroupCuts { cut: [a, b] }))
    }
}

/// `sum P(x,y,s) cost(y,s) 1{h(x,s) != y}` with FP cost `c_s` and FN
/// cost `1 - c_s` taken from `table`, evaluated on `model`.
fn cost_weighted_risk(
    model: &DiscreteJointModel,
    table: &CostWeights,
    predict: &dyn Fn(u8, usize) -> u8,
) -> f64 {
    model
        .support()
        .map(|(s, k)| {
            let h = predict(s, k);
            let y = 1 - h;
            model.mass(s, k, y) * table.row_weight(y, s)
        })
        .sum()
}

/// Brute-force minimizer of `risk` over the threshold family. Candidates
/// are scanned from most to least accepting; the first strict minimum
/// wins, so ties favor acceptance.
fn brute_force_minimizer(family: &ThresholdFamily, risk: impl Fn(GroupCuts) -> f64) -> GroupCuts {
    let mut best = GroupCuts { cut: [0, 0] };
    let mut best_risk = f64::INFINITY;
    for cuts in family.all() {
        let r = risk(cuts);
        if r < best_risk {
            best_risk = r;
            best = cuts;
        }
    }
    best
}

/// Which cost table the recovery check minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightTable {
    /// Odds-shifted thresholds built from the unbiased base rate.
    Corrected,
    /// Equal-opportunity table written with `beta p10 + p11` in place of
    /// the base rate. Only defined for positive-subgroup bias.
    BiasedMass,
}

impl WeightTable {
    pub fn as_str(self) -> &'static str {
        match self {
            WeightTable::Corrected => "corrected",
            WeightTable::BiasedMass => "biased_mass",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    /// Mass of the original distribution on which the two classifiers agree.
    pub agreement: f64,
    /// Support points where they disagree.
    pub disagreements: usize,
    pub cuts: GroupCuts,
}

/// Fits group thresholds by exact weighted-risk minimization on the biased
/// model and compares them with the fair plug-in rule on the original.
pub fn check_recovery(
    model: &DiscreteJointModel,
    beta: f64,
    mode: BiasMode,
    lambda: f64,
    constraint: Constraint,
    table: WeightTable,
) -> Result<RecoveryReport> {
    check_positive_subgroups(model)?;
    let tie_break = 1;
    let p = model.subgroup_probs();
    let params = TradeoffParams::new(lambda, constraint, model.base_rate(), tie_break)?;
    let (bp, bn) = mode.betas(beta);
    let weights = match table {
        WeightTable::Corrected => corrected_weights(bp, bn, &params)?,
        WeightTable::BiasedMass => {
            if constraint != Constraint::Eod || mode != BiasMode::Pos {
                return Err(invalid(
                    "table",
                    "the biased-mass table only covers equal opportunity under positive bias",
                ));
            }
            corrected_weights_eod_biased_mass(beta, lambda, p[Subgroup::new(1, 0)], p[Subgroup::new(1, 1)])?
        }
    };
    let biased = model.biased(bp, bn)?;
    let family = ThresholdFamily::new(&biased);
    let cuts = brute_force_minimizer(&family, |cuts| {
        cost_weighted_risk(&biased, &weights, &|s, k| family.predict(cuts, s, biased.eta(s, k)))
    });

    let mut wrong_mass = 0.0;
    let mut disagreements = 0;
    for (s, k) in model.support() {
        let fair = plugin_fair_predict(model.eta(s, k), s, &params);
        let fitted = family.predict(cuts, s, biased.eta(s, k));
        if fair != fitted {
            wrong_mass += model.point_mass(s, k);
            disagreements += 1;
        }
    }
    Ok(RecoveryReport {
        agreement: 1.0 - wrong_mass,
        disagreements,
        cuts,
    })
}

/// Posterior access shared by the exact models.
pub trait PosteriorModel {
    type Point: ?Sized;
    fn eta_at(&self, x: &Self::Point, s: u8) -> f64;
    /// Same model under `(beta_pos, beta_neg)` under-representation.
    fn biased_by(&self, beta_pos: f64, beta_neg: f64) -> Result<Self>
    where
        Self: Sized;
}

impl PosteriorModel for GaussianSubgroupModel {
    type Point = [f64];
    fn eta_at(&self, x: &[f64], s: u8) -> f64 {
        self.posterior_eta(ArrayView1::from(x), s)
    }
    fn biased_by(&self, beta_pos: f64, beta_neg: f64) -> Result<Self> {
        self.biased_model(beta_pos, beta_neg)
    }
}

/// Points of a discrete model are addressed by their support index.
impl PosteriorModel for DiscreteJointModel {
    type Point = usize;
    fn eta_at(&self, k: &usize, s: u8) -> f64 {
        self.eta(s, *k)
    }
    fn biased_by(&self, beta_pos: f64, beta_neg: f64) -> Result<Self> {
        self.biased(beta_pos, beta_neg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub max_eta_gap: f64,
    pub prediction_changes: usize,
    pub points: usize,
    pub holds: bool,
}

/// Compares posteriors and Bayes predictions of the model before and after
/// `(beta_pos, beta_neg)` bias on `points`; `group` restricts the
/// comparison to one group when set.
pub fn compare_posteriors<M: PosteriorModel>(
    model: &M,
    beta_pos: f64,
    beta_neg: f64,
    points: &[(&M::Point, u8)],
    group: Option<u8>,
) -> Result<SymmetryReport> {
    let biased = model.biased_by(beta_pos, beta_neg)?;
    let mut max_gap = 0.0f64;
    let mut changes = 0;
    let mut compared = 0;
    for &(x, s) in points {
        if group.is_some_and(|g| g != s) {
            continue;
        }
        compared += 1;
        let (a, b) = (model.eta_at(x, s), biased.eta_at(x, s));
        max_gap = max_gap.max((a - b).abs());
        if threshold_predict(a, 0.5, 1) != threshold_predict(b, 0.5, 1) {
            changes += 1;
        }
    }
    Ok(SymmetryReport {
        max_eta_gap: max_gap,
        prediction_changes: changes,
        points: compared,
        holds: max_gap <= SLACK && changes == 0,
    })
}

/// Equal under-representation of both underprivileged subgroups leaves the
/// posterior and the Bayes rule unchanged on every support point.
pub fn check_symmetry(model: &DiscreteJointModel, beta: f64) -> Result<SymmetryReport> {
    let ks: Vec<(usize, u8)> = model.support().map(|(s, k)| (k, s)).collect();
    let points: Vec<(&usize, u8)> = ks.iter().map(|(k, s)| (k, *s)).collect();
    compare_posteriors(model, beta, beta, &points, None)
}

/// Group-0 output of the plug-in rule in the vanishing-bias limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitCase {
    pub mode: BiasMode,
    pub constraint: Constraint,
    pub lambda: f64,
    /// `P(Y = 1)` of the biased model the plug-in rule is built on.
    pub base_rate: f64,
    /// Constant group-0 output of the closed form as published.
    pub stated: Option<u8>,
    /// Constant group-0 output obtained by taking the limit of the
    /// adjusted score directly.
    pub derived: Option<u8>,
    /// Group-0 outputs that are not all equal to `stated`.
    pub stated_mismatches: usize,
    pub derived_mismatches: usize,
    pub points: usize,
}

impl LimitCase {
    pub fn stated_holds(&self) -> bool {
        self.stated.is_some() && self.stated_mismatches == 0
    }

    pub fn derived_holds(&self) -> bool {
        self.derived.is_some() && self.derived_mismatches == 0
    }
}

/// `1{a > b}`, `None` at equality where the closed form hands the call to
/// the tie-break.
fn strict(a: f64, b: f64) -> Option<u8> {
    if a == b {
        None
    } else {
        Some(u8::from(a > b))
    }
}

/// Closed forms for group 0 as `beta -> 0`, as published:
/// positive bias gives `[l > 1]` (parity) and `0` (opportunity); negative
/// bias gives `[l > -1]` and `[P(Y=1) > l]`.
pub fn stated_limit(mode: BiasMode, constraint: Constraint, lambda: f64, base_rate: f64) -> Option<u8> {
    match (mode, constraint) {
        (BiasMode::Pos, Constraint::Spd) => strict(lambda, 1.0),
        (BiasMode::Pos, Constraint::Eod) => Some(0),
        (BiasMode::Neg, Constraint::Spd) => strict(lambda, -1.0),
        (BiasMode::Neg, Constraint::Eod) => strict(base_rate, lambda),
    }
}

/// Limit of the adjusted score itself. With `eta(x, 0) -> 1` the
/// opportunity score tends to `1/2 + l / (2 P)`, positive iff `l > -P`.
pub fn derived_limit(mode: BiasMode, constraint: Constraint, lambda: f64, base_rate: f64) -> Option<u8> {
    match (mode, constraint) {
        (BiasMode::Neg, Constraint::Eod) => strict(lambda, -base_rate),
        _ => stated_limit(mode, constraint, lambda, base_rate),
    }
}

/// Evaluates the plug-in rule of the `tiny_beta`-biased model on group 0
/// and compares it with both closed forms.
pub fn check_limits(
    model: &DiscreteJointModel,
    lambda: f64,
    tiny_beta: f64,
    mode: BiasMode,
    constraint: Constraint,
) -> Result<LimitCase> {
    if !(tiny_beta > 0.0 && tiny_beta <= 1e-6) {
        return Err(invalid("tiny_beta", format!("{tiny_beta} not in (0, 1e-6]")));
    }
    let (bp, bn) = mode.betas(tiny_beta);
    let biased = model.biased(bp, bn)?;
    let base_rate = biased.base_rate();
    let params = TradeoffParams::new(lambda, constraint, base_rate, 1)?;
    let stated = stated_limit(mode, constraint, lambda, base_rate);
    let derived = derived_limit(mode, constraint, lambda, base_rate);
    let mut case = LimitCase {
        mode,
        constraint,
        lambda,
        base_rate,
        stated,
        derived,
        stated_mismatches: 0,
        derived_mismatches: 0,
        points: biased.support_len(0),
    };
    for k in 0..biased.support_len(0) {
        let h = plugin_fair_predict(biased.eta(0, k), 0, &params);
        case.stated_mismatches += usize::from(stated != Some(h));
        case.derived_mismatches += usize::from(derived != Some(h));
    }
    Ok(case)
}

/// `128 ln(2 / delta) / (alpha^6 beta^2 eps^2)` before rounding.
pub fn sample_complexity_bound(alpha: f64, beta: f64, eps: f64, delta: f64) -> Result<f64> {
    let open_unit = |name: &'static str, v: f64, upper_closed: bool| {
        let ok = v > 0.0 && if upper_closed { v <= 1.0 } else { v < 1.0 };
        if ok {
            Ok(())
        } else {
            Err(invalid(name, format!("{v} out of range")))
        }
    };
    open_unit("alpha", alpha, true)?;
    open_unit("beta", beta, true)?;
    open_unit("delta", delta, false)?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(invalid("eps", format!("{eps} must be positive")));
    }
    Ok(128.0 * (2.0 / delta).ln() / (alpha.powi(6) * beta * beta * eps * eps))
}

/// Smallest sample size meeting [`sample_complexity_bound`].
pub fn sample_complexity(alpha: f64, beta: f64, eps: f64, delta: f64) -> Result<u64> {
    Ok(sample_complexity_bound(alpha, beta, eps, delta)?.ceil() as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub trials: usize,
    pub violations: usize,
    /// Samples redrawn because a subgroup came out empty.
    pub resampled: usize,
    pub bound: f64,
    pub bayes_risk: f64,
    /// Largest observed `E_D[L(g)]` over the trials.
    pub worst_risk: f64,
    pub mean_risk: f64,
}

impl BoundReport {
    pub fn violation_rate(&self) -> f64 {
        self.violations as f64 / self.trials as f64
    }
}

/// Multinomial counts over the support cells, drawn as a chain of
/// conditional binomials. Cells are ordered as in [`DiscreteJointModel::support`]
/// with `y = 0` before `y = 1`.
fn multinomial_counts(model: &DiscreteJointModel, n: u64, rng: &mut impl Rng) -> Vec<u64> {
    let probs: Vec<f64> = model
        .support()
        .flat_map(|(s, k)| [model.mass(s, k, 0), model.mass(s, k, 1)])
        .collect();
    let mut left = n;
    let mut mass_left = 1.0f64;
    let mut out = Vec::with_capacity(probs.len());
    for (i, &p) in probs.iter().enumerate() {
        if left == 0 || i + 1 == probs.len() {
            out.push(left);
            left = 0;
            continue;
        }
        let q = if mass_left > 0.0 { (p / mass_left).clamp(0.0, 1.0) } else { 1.0 };
        let c = Binomial::new(left, q).map(|b| b.sample(rng)).unwrap_or(left);
        out.push(c);
        left -= c;
        mass_left -= p;
    }
    out
}

/// Redraws allowed per trial when a subgroup comes out empty.
const MAX_REDRAWS: usize = 100;

/// `W_ys` from counts; empty subgroups get weight 0 (they carry no rows).
fn empirical_reweighing(counts: &PerSubgroup<u64>) -> PerSubgroup<f64> {
    let n: u64 = counts.0.iter().sum();
    let p = PerSubgroup(counts.0.map(|v| v as f64 / n as f64));
    PerSubgroup::from_fn(|g| {
        if p[g] == 0.0 {
            return 0.0;
        }
        let py = p[Subgroup::new(g.y, 0)] + p[Subgroup::new(g.y, 1)];
        let ps = p[Subgroup::new(0, g.s)] + p[Subgroup::new(1, g.s)];
        py * ps / p[g]
    })
}

/// Draws `n` points from the `beta`-biased model, minimizes the empirically
/// reweighed 0/1 risk over group thresholds, and compares the exact
/// original-distribution risk of the result with
/// `16 / (alpha^3 beta) sqrt(ln(2/delta) / 2n) + 16 / alpha^3 R*`.
pub fn check_bound(
    model: &DiscreteJointModel,
    beta: f64,
    mode: BiasMode,
    n: u64,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<BoundReport> {
    check_positive_subgroups(model)?;
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    if trials == 0 {
        return Err(invalid("trials", "must be at least 1"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta", format!("{delta} not in (0, 1)")));
    }
    let (bp, bn) = mode.betas(beta);
    let biased = model.biased(bp, bn)?;
    let alpha = model.alpha();
    let bayes_risk = model.bayes_risk();
    let a3 = alpha.powi(3);
    let bound = 16.0 / (a3 * beta) * ((2.0 / delta).ln() / (2.0 * n as f64)).sqrt() + 16.0 / a3 * bayes_risk;

    let family = ThresholdFamily::new(model);
    let cells: Vec<(u8, usize)> = model.support().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = BoundReport {
        trials,
        violations: 0,
        resampled: 0,
        bound,
        bayes_risk,
        worst_risk: 0.0,
        mean_risk: 0.0,
    };
    let ones = PerSubgroup([1.0; 4]);
    for _ in 0..trials {
        let mut attempts = 0;
        let (c, per) = loop {
            let c = multinomial_counts(&biased, n, &mut rng);
            let mut per = PerSubgroup([0u64; 4]);
            for (j, &(s, _)) in cells.iter().enumerate() {
                per[Subgroup::new(0, s)] += c[2 * j];
                per[Subgroup::new(1, s)] += c[2 * j + 1];
            }
            attempts += 1;
            // Tiny samples can never fill all four subgroups; after
            // MAX_REDRAWS the degenerate sample is used as is.
            if per.0.iter().all(|&v| v > 0) || attempts > MAX_REDRAWS {
                break (c, per);
            }
            report.resampled += 1;
        };
        let w = empirical_reweighing(&per);
        // Group thresholds are ranked by the original posterior; the
        // biased posterior orders each group's support identically.
        let cuts = brute_force_minimizer(&family, |cuts| {
            cells
                .iter()
                .enumerate()
                .map(|(j, &(s, k))| {
                    let h = family.predict(cuts, s, model.eta(s, k));
                    let y = 1 - h;
                    c[2 * j + usize::from(y)] as f64 * w[Subgroup::new(y, s)]
                })
                .sum()
        });
        let risk = model.expected_loss(
            &|s, k| f64::from(family.predict(cuts, s, model.eta(s, k))),
            Loss::ZeroOne,
            &ones,
        );
        report.worst_risk = report.worst_risk.max(risk);
        report.mean_risk += risk / trials as f64;
        if risk > bound {
            report.violations += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{make_model, UNIFORM_PRIORS};
    use proptest::prelude::*;

    #[test]
    fn identity_bias_on_balanced_model_gives_plain_loss() {
        let m = DiscreteJointModel::random_balanced(16, 3, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rule = LinearRule::random(3, &mut rng);
        for loss in [Loss::ZeroOne, Loss::Log] {
            let r = check_sandwich(&m, &rule, 1.0, BiasMode::Pos, loss).unwrap();
            assert!((r.mid - 4.0 * r.lhs).abs() < 1e-12);
            assert!(r.holds);
        }
    }

    #[test]
    fn sandwich_at_point_three() {
        let m = DiscreteJointModel::random(16, 3, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rule = LinearRule::random(3, &mut rng);
        let r = check_sandwich(&m, &rule, 0.3, BiasMode::Pos, Loss::ZeroOne).unwrap();
        assert!(r.holds, "{r:?}");
    }

    #[test]
    fn recovery_trivial_and_single_point() {
        let m = DiscreteJointModel::random(16, 3, 7);
        let r = check_recovery(&m, 1.0, BiasMode::Pos, 0.0, Constraint::Spd, WeightTable::Corrected).unwrap();
        assert_eq!(r.agreement, 1.0);
        let r = check_recovery(&m, 0.5, BiasMode::Pos, 0.4, Constraint::Spd, WeightTable::Corrected).unwrap();
        assert_eq!(r.agreement, 1.0);
    }

    #[test]
    fn recovery_rejects_singular_lambda() {
        let m = DiscreteJointModel::random(16, 3, 8);
        assert!(matches!(
            check_recovery(&m, 0.5, BiasMode::Pos, 1.0, Constraint::Spd, WeightTable::Corrected),
            Err(Error::SingularLambda { .. })
        ));
    }

    #[test]
    fn biased_mass_table_matches_at_unit_beta() {
        let m = DiscreteJointModel::random(16, 3, 9);
        for lambda in [-0.5, 0.0, 0.3] {
            let r = check_recovery(&m, 1.0, BiasMode::Pos, lambda, Constraint::Eod, WeightTable::BiasedMass)
                .unwrap();
            assert_eq!(r.agreement, 1.0);
        }
    }

    #[test]
    fn brute_force_agrees_with_bayes_threshold() {
        // Independent oracle: with unit costs the brute-force minimizer is
        // the Bayes rule, whose risk is the pointwise minimum.
        let m = DiscreteJointModel::random(16, 3, 10);
        let family = ThresholdFamily::new(&m);
        let table = CostWeights::UNIFORM;
        let cuts = brute_force_minimizer(&family, |cuts| {
            cost_weighted_risk(&m, &table, &|s, k| family.predict(cuts, s, m.eta(s, k)))
        });
        let risk = cost_weighted_risk(&m, &table, &|s, k| family.predict(cuts, s, m.eta(s, k)));
        assert!((risk - 0.5 * m.bayes_risk()).abs() < 1e-12);
    }

    #[test]
    fn symmetric_bias_keeps_posteriors() {
        let m = DiscreteJointModel::random(16, 3, 11);
        assert!(check_symmetry(&m, 1.0).unwrap().holds);
        assert!(check_symmetry(&m, 0.5).unwrap().holds);
    }

    #[test]
    fn one_sided_bias_spares_privileged_group() {
        let g = make_model(4, 1.0, UNIFORM_PRIORS, 3).unwrap();
        let ds = g.sample(2000, 4).unwrap();
        let rows: Vec<Vec<f64>> = (0..ds.len()).map(|i| ds.row(i).to_vec()).collect();
        let points: Vec<(&[f64], u8)> = rows.iter().map(Vec::as_slice).zip(ds.groups().iter().copied()).collect();
        let privileged = compare_posteriors(&g, 0.5, 1.0, &points, Some(1)).unwrap();
        assert!(privileged.holds);
        let under = compare_posteriors(&g, 0.5, 1.0, &points, Some(0)).unwrap();
        assert!(under.max_eta_gap > 1e-3);
        assert!(under.prediction_changes > 0);
    }

    #[test]
    fn limit_examples() {
        let m = DiscreteJointModel::random(16, 3, 12);
        let c = check_limits(&m, 0.3, 1e-8, BiasMode::Pos, Constraint::Eod).unwrap();
        assert!(c.stated_holds() && c.derived_holds());
        let c = check_limits(&m, 0.5, 1e-8, BiasMode::Pos, Constraint::Spd).unwrap();
        assert_eq!(c.stated, Some(0));
        assert!(c.stated_holds());
        let c = check_limits(&m, 0.0, 1e-8, BiasMode::Neg, Constraint::Spd).unwrap();
        assert_eq!(c.stated, Some(1));
        assert!(c.stated_holds());
    }

    #[test]
    fn opportunity_limit_under_negative_bias_follows_sign_of_lambda_plus_rate() {
        let m = DiscreteJointModel::random(16, 3, 13);
        for lambda in [-2.0, -0.5, 0.0, 0.5, 1.5] {
            let c = check_limits(&m, lambda, 1e-8, BiasMode::Neg, Constraint::Eod).unwrap();
            assert!(c.derived_holds(), "{c:?}");
        }
        // The published form predicts the opposite at both ends.
        let c = check_limits(&m, -2.0, 1e-8, BiasMode::Neg, Constraint::Eod).unwrap();
        assert_eq!((c.stated, c.derived), (Some(1), Some(0)));
        let c = check_limits(&m, 1.5, 1e-8, BiasMode::Neg, Constraint::Eod).unwrap();
        assert_eq!((c.stated, c.derived), (Some(0), Some(1)));
    }

    #[test]
    fn limits_reject_large_beta() {
        let m = DiscreteJointModel::random(4, 2, 1);
        assert!(check_limits(&m, 0.0, 0.1, BiasMode::Pos, Constraint::Spd).is_err());
    }

    #[test]
    fn sample_complexity_values() {
        // 128 ln 40 / 0.01, computed independently.
        let expected = 128.0 * 3.688_879_454_113_936 / 0.01;
        let b = sample_complexity_bound(1.0, 1.0, 0.1, 0.05).unwrap();
        assert!((b - expected).abs() < 1e-6);
        assert_eq!(sample_complexity(1.0, 1.0, 0.1, 0.05).unwrap(), 47218);
        let half = sample_complexity_bound(1.0, 0.5, 0.1, 0.05).unwrap();
        assert_eq!(half, 4.0 * b);
        assert_eq!(sample_complexity(1.0, 0.5, 0.1, 0.05).unwrap(), 188_871);
    }

    #[test]
    fn sample_complexity_domain() {
        assert!(sample_complexity(1.0, 1.0, 0.1, 2.0).is_err());
        assert!(sample_complexity(1.0, 1.0, 0.1, 1.0).is_err());
        assert!(sample_complexity(0.0, 1.0, 0.1, 0.05).is_err());
        assert!(sample_complexity(1.0, 1.5, 0.1, 0.05).is_err());
        assert!(sample_complexity(1.0, 1.0, 0.0, 0.05).is_err());
    }

    #[test]
    fn multinomial_counts_sum_and_track_masses() {
        let m = DiscreteJointModel::random(4, 2, 14);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let c = multinomial_counts(&m, n, &mut rng);
        assert_eq!(c.iter().sum::<u64>(), n);
        let masses: Vec<f64> = m.support().flat_map(|(s, k)| [m.mass(s, k, 0), m.mass(s, k, 1)]).collect();
        for (ci, p) in c.iter().zip(masses) {
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((*ci as f64 - n as f64 * p).abs() < 6.0 * sd + 1.0);
        }
    }

    #[test]
    fn tiny_sample_bound_is_vacuous() {
        let m = DiscreteJointModel::random_balanced(16, 3, 15);
        let r = check_bound(&m, 1.0, BiasMode::Pos, 1, 0.05, 20, 1).unwrap();
        assert!(r.bound > 1.0);
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn empirical_weights_match_reweighing_on_full_counts() {
        let counts = PerSubgroup([30u64, 20, 10, 40]);
        let probs = PerSubgroup(counts.0.map(|v| v as f64 / 100.0));
        let a = empirical_reweighing(&counts);
        let b = ReweighWeights::from_probs(&probs).unwrap();
        for g in Subgroup::ALL {
            assert!((a[g] - b.get(g)).abs() < 1e-15);
        }
        assert_eq!(empirical_reweighing(&PerSubgroup([1u64, 0, 0, 0]))[Subgroup::new(1, 0)], 0.0);
    }

    #[test]
    fn balanced_unit_beta_bound_form() {
        let m = DiscreteJointModel::random_balanced(16, 3, 16);
        let r = check_bound(&m, 1.0, BiasMode::Pos, 1000, 0.05, 5, 2).unwrap();
        let slack = 16.0 * ((40.0f64).ln() / 2000.0).sqrt();
        assert!((r.bound - (16.0 * m.bayes_risk() + slack)).abs() < 1e-12);
        assert!(r.worst_risk >= m.bayes_risk() - 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn sandwich_holds(seed in any::<u64>(), beta in 0.05f64..=1.0, pos: bool, log: bool) {
            let m = DiscreteJointModel::random(16, 3, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed.rotate_left(7));
            let rule = LinearRule::random(3, &mut rng);
            let mode = if pos { BiasMode::Pos } else { BiasMode::Neg };
            let loss = if log { Loss::Log } else { Loss::ZeroOne };
            let r = check_sandwich(&m, &rule, beta, mode, loss).unwrap();
            prop_assert!(r.holds, "{:?}", r);
        }

        #[test]
        fn recovery_is_exact(seed in any::<u64>(), beta in 0.05f64..=1.0, lambda in -0.9f64..0.9, pos: bool, eod: bool) {
            let m = DiscreteJointModel::random(16, 3, seed);
            let mode = if pos { BiasMode::Pos } else { BiasMode::Neg };
            let c = if eod { Constraint::Eod } else { Constraint::Spd };
            let r = check_recovery(&m, beta, mode, lambda, c, WeightTable::Corrected).unwrap();
            prop_assert_eq!(r.agreement, 1.0);
        }

        #[test]
        fn symmetric_bias_never_moves_posteriors(seed in any::<u64>(), beta in 0.01f64..=1.0) {
            let m = DiscreteJointModel::random(16, 3, seed);
            prop_assert!(check_symmetry(&m, beta).unwrap().holds);
        }
    }
}
