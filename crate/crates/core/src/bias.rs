//! Under-representation and label bias injection, and the bias grid.
//!
//! Both injections only touch the underprivileged group `s = 0` and use
//! exact counts: `round(beta * n)` rows are retained, `round(nu * n)` labels
//! are flipped.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::KvConfig;
use crate::dataset::{LabeledDataset, Subgroup};
use crate::error::{invalid, Error, Result};

/// `(beta_pos, beta_neg, nu)` for one grid cell. `(1, 1, 0)` is the identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasSetting {
    pub beta_pos: f64,
    pub beta_neg: f64,
    pub nu: f64,
}

impl BiasSetting {
    pub const IDENTITY: BiasSetting = BiasSetting {
        beta_pos: 1.0,
        beta_neg: 1.0,
        nu: 0.0,
    };

    pub fn new(beta_pos: f64, beta_neg: f64, nu: f64) -> Result<Self> {
        check_beta("beta_pos", beta_pos)?;
        check_beta("beta_neg", beta_neg)?;
        check_nu(nu)?;
        Ok(Self {
            beta_pos,
            beta_neg,
            nu,
        })
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    /// Strength in `[0, 1)` used for shading plots: 0 means no bias.
    pub fn strength(&self) -> f64 {
        (1.0 - self.beta_pos.min(self.beta_neg)).max(self.nu)
    }

    /// Applies under-representation, then label flipping, with independent
    /// streams derived from `seed`.
    pub fn apply(&self, ds: &LabeledDataset, seed: u64) -> Result<LabelBiasOutcome> {
        let under = if self.beta_pos == 1.0 && self.beta_neg == 1.0 {
            ds.clone()
        } else {
            inject_under_representation(ds, self.beta_pos, self.beta_neg, derive_seed(seed, 1))?
        };
        if self.nu == 0.0 {
            return Ok(LabelBiasOutcome {
                dataset: under,
                exhausted: false,
            });
        }
        inject_label_bias(&under, self.nu, derive_seed(seed, 2), false)
    }
}

fn check_beta(name: &'static str, beta: f64) -> Result<()> {
    if beta > 0.0 && beta <= 1.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("{beta} not in (0, 1]")))
    }
}

fn check_nu(nu: f64) -> Result<()> {
    if (0.0..1.0).contains(&nu) {
        Ok(())
    } else {
        Err(invalid("nu", format!("{nu} not in [0, 1)")))
    }
}

/// Keeps `round(beta_pos * n_10)` rows of `(y=1, s=0)` and
/// `round(beta_neg * n_00)` rows of `(y=0, s=0)`; every `s = 1` row is kept.
/// Output rows stay in their original relative order.
pub fn inject_under_representation(
    ds: &LabeledDataset,
    beta_pos: f64,
    beta_neg: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    check_beta("beta_pos", beta_pos)?;
    check_beta("beta_neg", beta_neg)?;
    let strata = ds.subgroup_indices();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep: Vec<usize> = Vec::with_capacity(ds.len());
    for g in Subgroup::ALL {
        let members = &strata[g];
        let beta = match (g.y, g.s) {
            (1, 0) => beta_pos,
            (0, 0) => beta_neg,
            _ => {
                keep.extend_from_slice(members);
                continue;
            }
        };
        if members.is_empty() {
            return Err(Error::EmptySubgroup(g));
        }
        let k = (beta * members.len() as f64).round() as usize;
        if k == 0 {
            return Err(Error::SubgroupTooSmall {
                subgroup: g,
                count: 0,
                needed: 1,
            });
        }
        keep.extend(sample(&mut rng, members.len(), k).into_iter().map(|j| members[j]));
    }
    keep.sort_unstable();
    ds.select_rows(&keep)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelBiasOutcome {
    pub dataset: LabeledDataset,
    /// Every `(y=1, s=0)` row was flipped.
    pub exhausted: bool,
}

/// Flips the label of exactly `round(nu * n_10)` rows of `(y=1, s=0)` to 0.
///
/// With `strict`, flipping away the whole subgroup is an error; otherwise the
/// outcome is flagged as exhausted.
pub fn inject_label_bias(
    ds: &LabeledDataset,
    nu: f64,
    seed: u64,
    strict: bool,
) -> Result<LabelBiasOutcome> {
    check_nu(nu)?;
    let g = Subgroup::new(1, 0);
    let members = &ds.subgroup_indices()[g];
    if members.is_empty() {
        return Err(Error::EmptySubgroup(g));
    }
    let k = (nu * members.len() as f64).round() as usize;
    let exhausted = k == members.len();
    if exhausted && strict {
        return Err(Error::SubgroupTooSmall {
            subgroup: g,
            count: 0,
            needed: 1,
        });
    }
    if k == 0 {
        return Ok(LabelBiasOutcome {
            dataset: ds.clone(),
            exhausted,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = ds.labels().to_vec();
    for j in sample(&mut rng, members.len(), k) {
        labels[members[j]] = 0;
    }
    Ok(LabelBiasOutcome {
        dataset: ds.with_labels(labels)?,
        exhausted,
    })
}

/// The splitmix64 output finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one grid cell: chained splitmix64 avalanche over the indices.
pub fn mix64(master_seed: u64, run: u64, i: u64, j: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master_seed ^ splitmix64(run)) ^ i) ^ j)
}

/// Independent sub-stream `stream` of a seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream.wrapping_mul(0xD1B5_4A32_D192_ED03)))
}

/// Column index `j` used for label-bias cells in [`mix64`].
pub const NU_SWEEP_TAG: u64 = u32::MAX as u64;

/// Which loop of the experiment a cell belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellKind {
    /// Under-representation cell at `(beta_pos index, beta_neg index)`.
    Beta { i: usize, j: usize },
    /// Label-bias cell at `nu` index.
    Nu { k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub run: usize,
    pub kind: CellKind,
    pub setting: BiasSetting,
    pub cell_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasGrid {
    pub beta_pos_values: Vec<f64>,
    pub beta_neg_values: Vec<f64>,
    pub nu_values: Vec<f64>,
    pub runs: usize,
    pub master_seed: u64,
}

fn tenths(start: usize, end: usize) -> Vec<f64> {
    (start..=end).map(|k| k as f64 / 10.0).collect()
}

impl BiasGrid {
    /// beta in {0.1, ..., 1.0} on both axes, nu in {0.0, ..., 0.9}, 5 runs.
    pub fn full(master_seed: u64) -> Self {
        Self {
            beta_pos_values: tenths(1, 10),
            beta_neg_values: tenths(1, 10),
            nu_values: tenths(0, 9),
            runs: 5,
            master_seed,
        }
    }

    /// beta in {0.25, 0.5, 0.75, 1.0}, nu in {0, 0.3, 0.6, 0.9}, 3 runs.
    pub fn desk(master_seed: u64) -> Self {
        let betas = vec![0.25, 0.5, 0.75, 1.0];
        Self {
            beta_pos_values: betas.clone(),
            beta_neg_values: betas,
            nu_values: vec![0.0, 0.3, 0.6, 0.9],
            runs: 3,
            master_seed,
        }
    }

    /// Only the identity cell.
    pub fn identity(runs: usize, master_seed: u64) -> Self {
        Self {
            beta_pos_values: vec![1.0],
            beta_neg_values: vec![1.0],
            nu_values: vec![],
            runs,
            master_seed,
        }
    }

    pub fn preset(name: &str, master_seed: u64) -> Result<Self> {
        match name {
            "full" | "paper" => Ok(Self::full(master_seed)),
            "desk" => Ok(Self::desk(master_seed)),
            "identity" => Ok(Self::identity(1, master_seed)),
            other => Err(invalid("grid", format!("unknown preset `{other}`"))),
        }
    }

    /// Overrides fields from `beta_pos`, `beta_neg`, `nu`, `runs` and
    /// `master_seed` keys when present.
    pub fn with_overrides(mut self, cfg: &KvConfig) -> Result<Self> {
        if let Some(v) = cfg.f64_list("beta_pos")? {
            self.beta_pos_values = v;
        }
        if let Some(v) = cfg.f64_list("beta_neg")? {
            self.beta_neg_values = v;
        }
        if let Some(v) = cfg.f64_list("nu")? {
            self.nu_values = v;
        }
        if let Some(r) = cfg.parse_value::<usize>("runs")? {
            self.runs = r;
        }
        if let Some(s) = cfg.parse_value::<u64>("master_seed")? {
            self.master_seed = s;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(invalid("runs", "must be positive"));
        }
        for &b in &self.beta_pos_values {
            check_beta("beta_pos", b)?;
        }
        for &b in &self.beta_neg_values {
            check_beta("beta_neg", b)?;
        }
        for &nu in &self.nu_values {
            check_nu(nu)?;
        }
        Ok(())
    }

    pub fn cells_per_run(&self) -> usize {
        self.beta_pos_values.len() * self.beta_neg_values.len() + self.nu_values.len()
    }

    pub fn len(&self) -> usize {
        self.runs * self.cells_per_run()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// All `(run, cell)` entries: run-major, then beta_pos, beta_neg, then nu.
///
/// The beta cells use `nu = 0`; the nu cells use `beta_pos = beta_neg = 1`.
pub fn enumerate_grid(grid: &BiasGrid) -> Vec<GridEntry> {
    let mut out = Vec::with_capacity(grid.len());
    for run in 0..grid.runs {
        for (i, &bp) in grid.beta_pos_values.iter().enumerate() {
            for (j, &bn) in grid.beta_neg_values.iter().enumerate() {
                out.push(GridEntry {
                    run,
                    kind: CellKind::Beta { i, j },
                    setting: BiasSetting {
                        beta_pos: bp,
                        beta_neg: bn,
                        nu: 0.0,
                    },
                    cell_seed: mix64(grid.master_seed, run as u64, i as u64, j as u64),
                });
            }
        }
        for (k, &nu) in grid.nu_values.iter().enumerate() {
            out.push(GridEntry {
                run,
                kind: CellKind::Nu { k },
                setting: BiasSetting {
                    beta_pos: 1.0,
                    beta_neg: 1.0,
                    nu,
                },
                cell_seed: mix64(grid.master_seed, run as u64, k as u64, NU_SWEEP_TAG),
            });
        }
    }
    out
}
