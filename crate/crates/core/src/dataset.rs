//! Labeled tabular data with a binary label `y` and a binary group `s`.
//!
//! Every row belongs to exactly one of four subgroups `(y, s)`. Group `s = 0`
//! is the underprivileged group and `y = 1` the favorable label throughout the
//! crate.

use std::fmt;
use std::ops::{Index, IndexMut};

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};

/// One of the four `(label, group)` cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Subgroup {
    pub y: u8,
    pub s: u8,
}

impl Subgroup {
    /// Canonical order `(0,0), (0,1), (1,0), (1,1)`.
    pub const ALL: [Subgroup; 4] = [
        Subgroup::new(0, 0),
        Subgroup::new(0, 1),
        Subgroup::new(1, 0),
        Subgroup::new(1, 1),
    ];

    pub const fn new(y: u8, s: u8) -> Self {
        Self { y, s }
    }

    pub const fn index(self) -> usize {
        (self.y as usize) * 2 + self.s as usize
    }
}

impl fmt::Display for Subgroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.y, self.s)
    }
}

/// A value per subgroup, indexed by [`Subgroup`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PerSubgroup<T>(pub [T; 4]);

impl<T: Copy> PerSubgroup<T> {
    pub fn from_fn(mut f: impl FnMut(Subgroup) -> T) -> Self {
        Self(Subgroup::ALL.map(&mut f))
    }

    pub fn iter(&self) -> impl Iterator<Item = (Subgroup, T)> + '_ {
        Subgroup::ALL.iter().map(move |&g| (g, self[g]))
    }
}

impl<T> Index<Subgroup> for PerSubgroup<T> {
    type Output = T;
    fn index(&self, g: Subgroup) -> &T {
        &self.0[g.index()]
    }
}

impl<T> IndexMut<Subgroup> for PerSubgroup<T> {
    fn index_mut(&mut self, g: Subgroup) -> &mut T {
        &mut self.0[g.index()]
    }
}

/// Feature matrix plus binary label and group per row.
///
/// Immutable after construction; the constructor enforces equal row counts,
/// `{0,1}` labels and groups, and finite features.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Array2<f64>,
    labels: Vec<u8>,
    groups: Vec<u8>,
    feature_names: Vec<String>,
}

impl LabeledDataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<u8>,
        groups: Vec<u8>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let n = features.nrows();
        if n == 0 {
            return Err(Error::InvalidDataset("dataset has no rows".into()));
        }
        if labels.len() != n || groups.len() != n {
            return Err(Error::InvalidDataset(format!(
                "row counts differ: features {n}, labels {}, groups {}",
                labels.len(),
                groups.len()
            )));
        }
        if feature_names.len() != features.ncols() {
            return Err(Error::InvalidDataset(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                features.ncols()
            )));
        }
        if let Some(i) = labels.iter().position(|&y| y > 1) {
            return Err(Error::InvalidDataset(format!("label at row {i} is not 0/1")));
        }
        if let Some(i) = groups.iter().position(|&s| s > 1) {
            return Err(Error::InvalidDataset(format!("group at row {i} is not 0/1")));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("non-finite feature value".into()));
        }
        Ok(Self {
            features,
            labels,
            groups,
            feature_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn groups(&self) -> &[u8] {
        &self.groups
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn subgroup_of(&self, i: usize) -> Subgroup {
        Subgroup::new(self.labels[i], self.groups[i])
    }

    /// Row indices of each subgroup, in ascending order.
    pub fn subgroup_indices(&self) -> PerSubgroup<Vec<usize>> {
        let mut out: [Vec<usize>; 4] = Default::default();
        for i in 0..self.len() {
            out[self.subgroup_of(i).index()].push(i);
        }
        PerSubgroup(out)
    }

    /// New dataset made of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let features = self.features.select(Axis(0), rows);
        let labels = rows.iter().map(|&i| self.labels[i]).collect();
        let groups = rows.iter().map(|&i| self.groups[i]).collect();
        Self::new(features, labels, groups, self.feature_names.clone())
    }

    /// Same rows and features with a replacement label vector.
    pub fn with_labels(&self, labels: Vec<u8>) -> Result<Self> {
        Self::new(
            self.features.clone(),
            labels,
            self.groups.clone(),
            self.feature_names.clone(),
        )
    }

    /// SHA-256 over shape, names and the exact bit patterns of every value.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.len() as u64).to_le_bytes());
        h.update((self.n_features() as u64).to_le_bytes());
        for name in &self.feature_names {
            h.update(name.as_bytes());
            h.update([0u8]);
        }
        for v in self.features.iter() {
            h.update(v.to_bits().to_le_bytes());
        }
        h.update(&self.labels);
        h.update(&self.groups);
        hex::encode(h.finalize())
    }
}

/// Subgroup counts, probabilities and the imbalance ratio `min p / max p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupStats {
    pub counts: PerSubgroup<usize>,
    pub probs: PerSubgroup<f64>,
    /// `min_ys p_ys / max_ys p_ys`; reported as 0 when a subgroup is empty.
    pub imbalance_alpha: f64,
    /// Set when at least one subgroup is empty.
    pub degenerate: bool,
}

impl SubgroupStats {
    pub fn from_counts(counts: PerSubgroup<usize>) -> Self {
        let n: usize = counts.0.iter().sum();
        let probs = PerSubgroup::from_fn(|g| {
            if n == 0 {
                0.0
            } else {
                counts[g] as f64 / n as f64
            }
        });
        let degenerate = counts.0.contains(&0);
        let imbalance_alpha = if degenerate {
            0.0
        } else {
            let min = probs.0.iter().copied().fold(f64::INFINITY, f64::min);
            let max = probs.0.iter().copied().fold(0.0, f64::max);
            min / max
        };
        Self {
            counts,
            probs,
            imbalance_alpha,
            degenerate,
        }
    }

    pub fn total(&self) -> usize {
        self.counts.0.iter().sum()
    }

    /// Empirical `P(Y = 1)`.
    pub fn base_rate(&self) -> f64 {
        self.probs[Subgroup::new(1, 0)] + self.probs[Subgroup::new(1, 1)]
    }
}

pub fn subgroup_stats(ds: &LabeledDataset) -> SubgroupStats {
    let mut counts = PerSubgroup([0usize; 4]);
    for i in 0..ds.len() {
        counts[ds.subgroup_of(i)] += 1;
    }
    SubgroupStats::from_counts(counts)
}

/// Test-row indices of an exact-count stratified split, sorted ascending.
///
/// Per subgroup, `round(test_fraction * n_ys)` rows are drawn uniformly
/// without replacement. Subgroups are visited in canonical order from one
/// seeded stream.
pub fn stratified_test_rows(
    strata: &PerSubgroup<Vec<usize>>,
    test_fraction: f64,
    seed: u64,
) -> Result<Vec<usize>> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(invalid("test_fraction", format!("{test_fraction} not in (0,1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test = Vec::new();
    for g in Subgroup::ALL {
        let members = &strata[g];
        let n = members.len();
        if n < 2 {
            return Err(Error::SubgroupTooSmall {
                subgroup: g,
                count: n,
                needed: 2,
            });
        }
        let k = (test_fraction * n as f64).round() as usize;
        if k >= n {
            return Err(Error::SubgroupTooSmall {
                subgroup: g,
                count: n,
                needed: k + 1,
            });
        }
        test.extend(sample(&mut rng, n, k).into_iter().map(|j| members[j]));
    }
    test.sort_unstable();
    Ok(test)
}

/// Splits `ds` into `(train, test)` with exact per-subgroup counts.
pub fn stratified_split(
    ds: &LabeledDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let test_rows = stratified_test_rows(&ds.subgroup_indices(), test_fraction, seed)?;
    let train_rows = complement(ds.len(), &test_rows);
    Ok((ds.select_rows(&train_rows)?, ds.select_rows(&test_rows)?))
}

/// Indices in `0..n` not present in the sorted slice `taken`.
pub(crate) fn complement(n: usize, taken: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(n - taken.len());
    let mut t = taken.iter().peekable();
    for i in 0..n {
        if t.peek() == Some(&&i) {
            t.next();
        } else {
            out.push(i);
        }
    }
    out
}
