//! The audit loop: bias every grid cell, train, evaluate on the untouched
//! test set, then aggregate across runs and cells.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bias::{derive_seed, enumerate_grid, BiasGrid, BiasSetting, CellKind, GridEntry};
use crate::classifiers::expgrad::ExpgradConfig;
use crate::classifiers::logistic::{LrConfig, LrFit};
use crate::classifiers::{train, train_base, ClassifierId, TrainContext, DEFAULT_LAMBDAS};
use crate::dataset::{subgroup_stats, LabeledDataset, SubgroupStats};
use crate::error::{invalid, Error, Result};
use crate::metrics::{evaluate, MetricSet};
use crate::synthetic::{make_model, GaussianSubgroupModel, SyntheticProfile, UNIFORM_PRIORS};

/// Which loop of the grid a record came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sweep {
    /// Under-representation cells (`nu = 0`).
    Beta,
    /// Label-bias cells (`beta_pos = beta_neg = 1`).
    Nu,
}

impl From<CellKind> for Sweep {
    fn from(k: CellKind) -> Self {
        match k {
            CellKind::Beta { .. } => Sweep::Beta,
            CellKind::Nu { .. } => Sweep::Nu,
        }
    }
}

/// One `(run, cell, classifier, lambda)` result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub run: usize,
    pub sweep: Sweep,
    pub setting: BiasSetting,
    pub classifier: ClassifierId,
    pub lambda: Option<f64>,
    /// `None` for degenerate cells.
    pub err: Option<f64>,
    pub spd: Option<f64>,
    pub eod: Option<f64>,
    pub n_train_effective: usize,
    pub degenerate: bool,
    pub seed: u64,
}

impl AuditRecord {
    pub fn metric(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::Err => self.err,
            Metric::Spd => self.spd,
            Metric::Eod => self.eod,
        }
    }

    /// `(classifier, lambda)` grouping key with a total order.
    pub fn key(&self) -> SeriesKey {
        SeriesKey {
            classifier: self.classifier,
            lambda: self.lambda.map(OrdF64),
        }
    }
}

/// `f64` with the IEEE total order, for use in map keys.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrdF64(pub f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// A classifier together with its trade-off value, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SeriesKey {
    pub classifier: ClassifierId,
    pub lambda: Option<OrdF64>,
}

impl fmt::Display for SeriesKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.lambda {
            Some(l) => write!(f, "{}[lambda={}]", self.classifier, l.0),
            None => write!(f, "{}", self.classifier),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    Err,
    Spd,
    Eod,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Err, Metric::Spd, Metric::Eod];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Err => "err",
            Metric::Spd => "spd",
            Metric::Eod => "eod",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| invalid("metric", format!("unknown metric `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditConfig {
    pub classifiers: Vec<ClassifierId>,
    /// Trade-off values for the classifiers that take one.
    pub lambdas: Vec<f64>,
    pub lr: LrConfig,
    pub expgrad: ExpgradConfig,
    pub tie_break: u8,
    /// When set, plug-in classifiers use the exact posterior of this model.
    pub oracle: Option<GaussianSubgroupModel>,
}

impl AuditConfig {
    pub fn new(classifiers: Vec<ClassifierId>) -> Self {
        Self {
            classifiers,
            lambdas: DEFAULT_LAMBDAS.to_vec(),
            lr: LrConfig::default(),
            expgrad: ExpgradConfig::default(),
            tie_break: 1,
            oracle: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditOutcome {
    /// Canonical order: grid order, then classifier list order, then lambda.
    pub records: Vec<AuditRecord>,
    /// Test-set fingerprint, identical before and after the audit.
    pub test_hash: String,
    /// Fits that hit an iteration cap or missed a constraint tolerance.
    pub nonconverged: usize,
}

fn degenerate_records(entry: &GridEntry, cfg: &AuditConfig, n: usize) -> Vec<AuditRecord> {
    series(cfg)
        .into_iter()
        .map(|(classifier, lambda)| AuditRecord {
            run: entry.run,
            sweep: entry.kind.into(),
            setting: entry.setting,
            classifier,
            lambda,
            err: None,
            spd: None,
            eod: None,
            n_train_effective: n,
            degenerate: true,
            seed: entry.cell_seed,
        })
        .collect()
}

/// `(classifier, lambda)` pairs in output order.
fn series(cfg: &AuditConfig) -> Vec<(ClassifierId, Option<f64>)> {
    let mut out = Vec::new();
    for &id in &cfg.classifiers {
        if id.uses_lambda() {
            out.extend(cfg.lambdas.iter().map(|&l| (id, Some(l))));
        } else {
            out.push((id, None));
        }
    }
    out
}

fn is_degenerate_error(e: &Error) -> bool {
    matches!(
        e,
        Error::EmptySubgroup(_) | Error::SubgroupTooSmall { .. } | Error::SingularLambda { .. }
    )
}

/// Runs one grid cell; returns its records and the non-converged count.
fn run_cell(
    entry: &GridEntry,
    train_set: &LabeledDataset,
    original: &SubgroupStats,
    test: &LabeledDataset,
    cfg: &AuditConfig,
) -> Result<(Vec<AuditRecord>, usize)> {
    let biased = match entry.setting.apply(train_set, entry.cell_seed) {
        Ok(outcome) => outcome.dataset,
        Err(e) if is_degenerate_error(&e) => return Ok((degenerate_records(entry, cfg, 0), 0)),
        Err(e) => return Err(e),
    };
    let n = biased.len();
    if subgroup_stats(&biased).degenerate {
        return Ok((degenerate_records(entry, cfg, n), 0));
    }
    let ctx = TrainContext {
        train: &biased,
        setting: entry.setting,
        original,
        oracle: cfg.oracle.as_ref(),
        lr: cfg.lr,
        expgrad: cfg.expgrad,
        tie_break: cfg.tie_break,
    };
    let needs_base = cfg.classifiers.iter().any(|id| {
        matches!(
            id,
            ClassifierId::BaseLr | ClassifierId::PluginSpd | ClassifierId::PluginEod
        )
    });
    let base: Option<LrFit> = if needs_base { Some(train_base(&ctx)?) } else { None };
    let predict_seed = derive_seed(entry.cell_seed, 3);

    let mut records = Vec::new();
    let mut nonconverged = 0;
    for (classifier, lambda) in series(cfg) {
        let mut rec = AuditRecord {
            run: entry.run,
            sweep: entry.kind.into(),
            setting: entry.setting,
            classifier,
            lambda,
            err: None,
            spd: None,
            eod: None,
            n_train_effective: n,
            degenerate: false,
            seed: entry.cell_seed,
        };
        match train(classifier, lambda, &ctx, base.as_ref()) {
            Ok(trained) => {
                nonconverged += usize::from(!trained.converged);
                let preds = trained.model.predict(test, predict_seed);
                let MetricSet { err, spd, eod } = evaluate(&preds, test)?;
                rec.err = Some(err);
                rec.spd = spd;
                rec.eod = eod;
            }
            Err(e) if is_degenerate_error(&e) => rec.degenerate = true,
            Err(e) => return Err(e),
        }
        records.push(rec);
    }
    Ok((records, nonconverged))
}

/// Runs every `(run, cell, classifier)` of `grid`. Cells are independent
/// and processed in parallel on the current rayon pool; the output order
/// does not depend on scheduling.
pub fn run_audit(
    train_set: &LabeledDataset,
    test: &LabeledDataset,
    grid: &BiasGrid,
    cfg: &AuditConfig,
) -> Result<AuditOutcome> {
    grid.validate()?;
    if cfg.classifiers.is_empty() {
        return Err(invalid("classifiers", "at least one classifier is required"));
    }
    if cfg.lambdas.is_empty() && cfg.classifiers.iter().any(|c| c.uses_lambda()) {
        return Err(invalid("lambdas", "trade-off classifiers need at least one lambda"));
    }
    let original = subgroup_stats(train_set);
    if let Some((g, _)) = original.counts.iter().find(|&(_, c)| c == 0) {
        return Err(Error::EmptySubgroup(g));
    }
    let before = test.fingerprint();
    let entries = enumerate_grid(grid);
    let results: Vec<(Vec<AuditRecord>, usize)> = entries
        .par_iter()
        .map(|e| run_cell(e, train_set, &original, test, cfg))
        .collect::<Result<_>>()?;
    let after = test.fingerprint();
    if after != before {
        return Err(Error::TestSetMutated { before, after });
    }
    let mut records = Vec::with_capacity(results.iter().map(|r| r.0.len()).sum());
    let mut nonconverged = 0;
    for (r, c) in results {
        records.extend(r);
        nonconverged += c;
    }
    Ok(AuditOutcome {
        records,
        test_hash: before,
        nonconverged,
    })
}

/// Model, train and test sets for a synthetic profile, all derived from
/// `seed`.
pub fn synthetic_split(
    profile: &SyntheticProfile,
    seed: u64,
) -> Result<(GaussianSubgroupModel, LabeledDataset, LabeledDataset)> {
    let model = make_model(profile.dim, profile.sigma, UNIFORM_PRIORS, derive_seed(seed, 10))?;
    let train_set = model.sample(profile.n_train, derive_seed(seed, 11))?;
    let test = model.sample(profile.n_test, derive_seed(seed, 12))?;
    Ok((model, train_set, test))
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            count: values.len(),
        })
    }
}

/// Aggregate of one classifier over a set of cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub key: SeriesKey,
    /// Distinct cells with at least one usable record.
    pub cells: usize,
    /// Records left out because they were degenerate or missed a metric.
    pub excluded: usize,
    pub err: Option<Summary>,
    pub spd: Option<Summary>,
    pub eod: Option<Summary>,
}

impl SeriesSummary {
    pub fn metric(&self, m: Metric) -> Option<&Summary> {
        match m {
            Metric::Err => self.err.as_ref(),
            Metric::Spd => self.spd.as_ref(),
            Metric::Eod => self.eod.as_ref(),
        }
    }
}

/// One row of the label-bias table: a classifier at one `nu`, summarized
/// over runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuRow {
    pub key: SeriesKey,
    pub nu: f64,
    pub summary: SeriesSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    /// Per classifier: per-cell mean over runs, then mean and std over the
    /// under-representation cells.
    pub beta: Vec<SeriesSummary>,
    pub nu: Vec<NuRow>,
    /// Base LR on the unbiased training set, averaged over runs.
    pub baseline: Option<MetricMeans>,
    /// Degenerate records across the whole input.
    pub degenerate_records: usize,
    pub total_records: usize,
}

/// Run-averaged metrics of a single cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricMeans {
    pub err: Option<f64>,
    pub spd: Option<f64>,
    pub eod: Option<f64>,
}

impl MetricMeans {
    pub fn metric(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::Err => self.err,
            Metric::Spd => self.spd,
            Metric::Eod => self.eod,
        }
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

type CellId = (OrdF64, OrdF64, OrdF64);

/// Cell of a record: its bias setting.
fn setting_cell(r: &AuditRecord) -> CellId {
    (OrdF64(r.setting.beta_pos), OrdF64(r.setting.beta_neg), OrdF64(r.setting.nu))
}

/// Per-cell run means of `metric`, plus the number of excluded records.
fn cell_means(records: &[&AuditRecord], metric: Metric, cell: fn(&AuditRecord) -> CellId) -> (Vec<f64>, usize) {
    let mut cells: BTreeMap<CellId, Vec<f64>> = BTreeMap::new();
    let mut excluded = 0;
    for r in records {
        let slot = cells.entry(cell(r)).or_default();
        match r.metric(metric) {
            Some(v) if !r.degenerate => slot.push(v),
            _ => excluded += 1,
        }
    }
    (cells.values().filter_map(|v| mean(v)).collect(), excluded)
}

fn summarize(key: SeriesKey, records: &[&AuditRecord], cell: fn(&AuditRecord) -> CellId) -> SeriesSummary {
    let (err, ex_err) = cell_means(records, Metric::Err, cell);
    let (spd, ex_spd) = cell_means(records, Metric::Spd, cell);
    let (eod, ex_eod) = cell_means(records, Metric::Eod, cell);
    let usable: std::collections::BTreeSet<CellId> = records
        .iter()
        .filter(|r| !r.degenerate && r.err.is_some())
        .map(|r| cell(r))
        .collect();
    SeriesSummary {
        key,
        cells: usable.len(),
        excluded: ex_err.max(ex_spd).max(ex_eod),
        err: Summary::of(&err),
        spd: Summary::of(&spd),
        eod: Summary::of(&eod),
    }
}

/// Mean over runs per cell first, then mean and population std over cells.
/// Degenerate records and missing metrics are excluded and counted.
pub fn aggregate(records: &[AuditRecord]) -> Result<FairnessReport> {
    if records.is_empty() {
        return Err(Error::NothingToAggregate(0));
    }
    let degenerate = records.iter().filter(|r| r.degenerate).count();
    if records.iter().all(|r| r.degenerate || r.err.is_none()) {
        return Err(Error::NothingToAggregate(records.len()));
    }
    let mut by_series: BTreeMap<SeriesKey, Vec<&AuditRecord>> = BTreeMap::new();
    for r in records {
        by_series.entry(r.key()).or_default().push(r);
    }
    let mut beta = Vec::new();
    let mut nu = Vec::new();
    for (key, recs) in &by_series {
        let beta_recs: Vec<&AuditRecord> = recs.iter().copied().filter(|r| r.sweep == Sweep::Beta).collect();
        if !beta_recs.is_empty() {
            beta.push(summarize(*key, &beta_recs, setting_cell));
        }
        let mut by_nu: BTreeMap<OrdF64, Vec<&AuditRecord>> = BTreeMap::new();
        for r in recs.iter().filter(|r| r.sweep == Sweep::Nu) {
            by_nu.entry(OrdF64(r.setting.nu)).or_default().push(r);
        }
        for (v, rs) in by_nu {
            // Each run is its own cell here, so the std is over runs.
            nu.push(NuRow {
                key: *key,
                nu: v.0,
                summary: summarize(*key, &rs, |r| (OrdF64(r.run as f64), OrdF64(0.0), OrdF64(0.0))),
            });
        }
    }
    Ok(FairnessReport {
        beta,
        nu,
        baseline: baseline(records),
        degenerate_records: degenerate,
        total_records: records.len(),
    })
}

/// Run-averaged base LR metrics on the identity cell, if present.
pub fn baseline(records: &[AuditRecord]) -> Option<MetricMeans> {
    let base: Vec<&AuditRecord> = records
        .iter()
        .filter(|r| r.classifier == ClassifierId::BaseLr && r.setting.is_identity() && !r.degenerate)
        .collect();
    if base.is_empty() {
        return None;
    }
    let pick = |m: Metric| mean(&base.iter().filter_map(|r| r.metric(m)).collect::<Vec<_>>());
    Some(MetricMeans {
        err: pick(Metric::Err),
        spd: pick(Metric::Spd),
        eod: pick(Metric::Eod),
    })
}

/// Position relative to the baseline in the (unfairness, error) plane:
/// 1 worse on both, 2 lower error but higher unfairness, 3 better on both,
/// 4 higher error but lower unfairness. A point on a boundary line takes
/// the smallest index among the quadrants it touches.
pub fn quadrant_classify(err: f64, unfairness: f64, baseline_err: f64, baseline_unfairness: f64) -> u8 {
    // Candidate sides: true = worse.
    let sides = |v: f64, b: f64| -> &'static [bool] {
        if v > b {
            &[true]
        } else if v < b {
            &[false]
        } else {
            &[true, false]
        }
    };
    let quadrant = |err_worse: bool, unf_worse: bool| match (err_worse, unf_worse) {
        (true, true) => 1,
        (false, true) => 2,
        (false, false) => 3,
        (true, false) => 4,
    };
    let mut best = 4;
    for &e in sides(err, baseline_err) {
        for &u in sides(unfairness, baseline_unfairness) {
            best = best.min(quadrant(e, u));
        }
    }
    best
}

/// Quadrant of a record against the baseline; `None` when a metric is
/// missing.
pub fn record_quadrant(record: &AuditRecord, base: &MetricMeans, unfairness: Metric) -> Option<u8> {
    Some(quadrant_classify(
        record.err?,
        record.metric(unfairness)?,
        base.err?,
        base.metric(unfairness)?,
    ))
}

/// Run-mean metric over the under-representation grid, rows indexed by
/// `beta_pos` and columns by `beta_neg`, both ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapMatrix {
    pub classifier: ClassifierId,
    pub lambda: Option<f64>,
    pub metric: Metric,
    pub beta_pos: Vec<f64>,
    pub beta_neg: Vec<f64>,
    /// `values[i][j]`; `None` marks a cell without any usable record.
    pub values: Vec<Vec<Option<f64>>>,
}

impl HeatmapMatrix {
    pub fn missing(&self) -> usize {
        self.values.iter().flatten().filter(|v| v.is_none()).count()
    }
}

pub fn heatmap_matrix(
    records: &[AuditRecord],
    classifier: ClassifierId,
    lambda: Option<f64>,
    metric: Metric,
) -> Result<HeatmapMatrix> {
    let key = SeriesKey {
        classifier,
        lambda: lambda.map(OrdF64),
    };
    let mut cells: BTreeMap<(OrdF64, OrdF64), (usize, Vec<f64>)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.sweep == Sweep::Beta && r.key() == key) {
        let slot = cells
            .entry((OrdF64(r.setting.beta_pos), OrdF64(r.setting.beta_neg)))
            .or_default();
        slot.0 += 1;
        if let (false, Some(v)) = (r.degenerate, r.metric(metric)) {
            slot.1.push(v);
        }
    }
    if cells.is_empty() {
        return Err(Error::RaggedGrid(format!("no under-representation records for {key}")));
    }
    let rows: std::collections::BTreeSet<OrdF64> = cells.keys().map(|k| k.0).collect();
    let cols: std::collections::BTreeSet<OrdF64> = cells.keys().map(|k| k.1).collect();
    if rows.len() * cols.len() != cells.len() {
        return Err(Error::RaggedGrid(format!(
            "{} cells present for a {}x{} grid",
            cells.len(),
            rows.len(),
            cols.len()
        )));
    }
    let runs = cells.values().next().map(|c| c.0).unwrap_or(0);
    if cells.values().any(|c| c.0 != runs) {
        return Err(Error::RaggedGrid("cells have different run counts".into()));
    }
    let values = rows
        .iter()
        .map(|&bp| cols.iter().map(|&bn| mean(&cells[&(bp, bn)].1)).collect())
        .collect();
    Ok(HeatmapMatrix {
        classifier,
        lambda,
        metric,
        beta_pos: rows.into_iter().map(|v| v.0).collect(),
        beta_neg: cols.into_iter().map(|v| v.0).collect(),
        values,
    })
}

/// Axis-aligned bounding box of the `(unfairness, err)` points of the
/// under-representation records of one series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_x: f64,
    pub max_x: f64,
    pub min_y: f64,
    pub max_y: f64,
}

impl BoundingBox {
    pub fn area(&self) -> f64 {
        (self.max_x - self.min_x) * (self.max_y - self.min_y)
    }

    pub fn of(points: impl IntoIterator<Item = (f64, f64)>) -> Option<Self> {
        let mut it = points.into_iter();
        let (x, y) = it.next()?;
        let mut b = Self {
            min_x: x,
            max_x: x,
            min_y: y,
            max_y: y,
        };
        for (x, y) in it {
            b.min_x = b.min_x.min(x);
            b.max_x = b.max_x.max(x);
            b.min_y = b.min_y.min(y);
            b.max_y = b.max_y.max(y);
        }
        Some(b)
    }
}

/// `(unfairness, err)` points of one series over the under-representation
/// cells, skipping records with a missing metric.
pub fn scatter_points(records: &[AuditRecord], key: SeriesKey, unfairness: Metric) -> Vec<(f64, f64, &AuditRecord)> {
    records
        .iter()
        .filter(|r| r.sweep == Sweep::Beta && r.key() == key && !r.degenerate)
        .filter_map(|r| Some((r.metric(unfairness)?, r.err?, r)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::tests::dataset_with_counts;

    fn rec(run: usize, bp: f64, bn: f64, err: Option<f64>) -> AuditRecord {
        AuditRecord {
            run,
            sweep: Sweep::Beta,
            setting: BiasSetting::new(bp, bn, 0.0).unwrap(),
            classifier: ClassifierId::BaseLr,
            lambda: None,
            err,
            spd: err,
            eod: err,
            n_train_effective: 10,
            degenerate: err.is_none(),
            seed: 0,
        }
    }

    #[test]
    fn single_record_has_zero_std() {
        let r = aggregate(&[rec(0, 1.0, 1.0, Some(0.2))]).unwrap();
        let s = r.beta[0].err.unwrap();
        assert_eq!((s.mean, s.std), (0.2, 0.0));
    }

    #[test]
    fn two_cells_mean_then_population_std() {
        // Cell A runs average to 0.1, cell B to 0.3.
        let records = vec![
            rec(0, 0.5, 1.0, Some(0.05)),
            rec(1, 0.5, 1.0, Some(0.15)),
            rec(0, 1.0, 1.0, Some(0.3)),
            rec(1, 1.0, 1.0, Some(0.3)),
        ];
        let r = aggregate(&records).unwrap();
        let s = r.beta[0].err.unwrap();
        assert!((s.mean - 0.2).abs() < 1e-12);
        assert!((s.std - 0.1).abs() < 1e-12);
        assert_eq!(r.beta[0].cells, 2);
    }

    #[test]
    fn degenerate_records_are_excluded_and_counted() {
        let records = vec![rec(0, 0.5, 1.0, None), rec(0, 1.0, 1.0, Some(0.3))];
        let r = aggregate(&records).unwrap();
        assert_eq!(r.beta[0].excluded, 1);
        assert_eq!(r.beta[0].cells, 1);
        assert_eq!(r.degenerate_records, 1);
        assert!(matches!(aggregate(&[rec(0, 0.5, 1.0, None)]), Err(Error::NothingToAggregate(1))));
        assert!(matches!(aggregate(&[]), Err(Error::NothingToAggregate(0))));
    }

    #[test]
    fn quadrant_rules() {
        assert_eq!(quadrant_classify(0.1, 0.1, 0.1, 0.1), 1);
        assert_eq!(quadrant_classify(0.2, 0.05, 0.1, 0.1), 4);
        assert_eq!(quadrant_classify(0.05, 0.2, 0.1, 0.1), 2);
        assert_eq!(quadrant_classify(0.05, 0.05, 0.1, 0.1), 3);
        assert_eq!(quadrant_classify(0.2, 0.2, 0.1, 0.1), 1);
        // Boundaries.
        assert_eq!(quadrant_classify(0.1, 0.05, 0.1, 0.1), 3);
        assert_eq!(quadrant_classify(0.05, 0.1, 0.1, 0.1), 2);
        assert_eq!(quadrant_classify(0.2, 0.1, 0.1, 0.1), 1);
    }

    #[test]
    fn heatmap_shapes() {
        let one = heatmap_matrix(&[rec(0, 1.0, 1.0, Some(0.1))], ClassifierId::BaseLr, None, Metric::Err).unwrap();
        assert_eq!(one.values, vec![vec![Some(0.1)]]);
        let mut recs = Vec::new();
        for bp in [0.5, 1.0] {
            for bn in [0.5, 1.0] {
                recs.push(rec(0, bp, bn, Some(bp * bn)));
            }
        }
        let m = heatmap_matrix(&recs, ClassifierId::BaseLr, None, Metric::Err).unwrap();
        assert_eq!(m.values[0][1], Some(0.5));
        recs.pop();
        assert!(matches!(
            heatmap_matrix(&recs, ClassifierId::BaseLr, None, Metric::Err),
            Err(Error::RaggedGrid(_))
        ));
        recs.push(rec(0, 1.0, 1.0, None));
        let m = heatmap_matrix(&recs, ClassifierId::BaseLr, None, Metric::Err).unwrap();
        assert_eq!(m.missing(), 1);
    }

    fn small_synthetic() -> (LabeledDataset, LabeledDataset) {
        let profile = SyntheticProfile {
            dim: 4,
            n_train: 600,
            n_test: 300,
            sigma: 1.0,
        };
        let (_, tr, te) = synthetic_split(&profile, 3).unwrap();
        (tr, te)
    }

    #[test]
    fn identity_grid_reproduces_baseline() {
        let (tr, te) = small_synthetic();
        let grid = BiasGrid::identity(2, 5);
        let out = run_audit(&tr, &te, &grid, &AuditConfig::new(vec![ClassifierId::BaseLr])).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.records[0].err, out.records[1].err);
        assert_eq!(out.test_hash, te.fingerprint());
        let base = baseline(&out.records).unwrap();
        assert_eq!(base.err, out.records[0].err);
    }

    #[test]
    fn rerun_is_identical_and_order_is_canonical() {
        let (tr, te) = small_synthetic();
        let mut grid = BiasGrid::desk(9);
        grid.runs = 1;
        let cfg = AuditConfig {
            lambdas: vec![0.0, 0.4],
            ..AuditConfig::new(vec![ClassifierId::BaseLr, ClassifierId::Thm3Spd])
        };
        let a = run_audit(&tr, &te, &grid, &cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| run_audit(&tr, &te, &grid, &cfg)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records.len(), 20 * 3);
        assert_eq!(a.records[1].lambda, Some(0.0));
        assert_eq!(a.records[2].lambda, Some(0.4));
    }

    #[test]
    fn degenerate_cells_are_flagged() {
        let tr = dataset_with_counts([20, 20, 2, 20]);
        let te = dataset_with_counts([10, 10, 10, 10]);
        let grid = BiasGrid {
            beta_pos_values: vec![0.1, 1.0],
            beta_neg_values: vec![1.0],
            nu_values: vec![],
            runs: 1,
            master_seed: 1,
        };
        let out = run_audit(&tr, &te, &grid, &AuditConfig::new(vec![ClassifierId::BaseLr])).unwrap();
        assert!(out.records[0].degenerate && out.records[0].err.is_none());
        assert!(!out.records[1].degenerate);
    }

    #[test]
    fn empty_subgroup_at_identity_is_an_error() {
        let tr = dataset_with_counts([20, 20, 0, 20]);
        let te = dataset_with_counts([10, 10, 10, 10]);
        let grid = BiasGrid::identity(1, 1);
        assert!(matches!(
            run_audit(&tr, &te, &grid, &AuditConfig::new(vec![ClassifierId::BaseLr])),
            Err(Error::EmptySubgroup(_))
        ));
    }
}
