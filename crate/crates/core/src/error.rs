use std::path::PathBuf;

use thiserror::Error;

use crate::dataset::Subgroup;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("subgroup (y={}, s={}) is empty", .0.y, .0.s)]
    EmptySubgroup(Subgroup),
    #[error("subgroup (y={}, s={}) has {count} rows; at least {needed} required", .subgroup.y, .subgroup.s)]
    SubgroupTooSmall {
        subgroup: Subgroup,
        count: usize,
        needed: usize,
    },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("singular trade-off: lambda = {lambda} makes the weight table undefined")]
    SingularLambda { lambda: f64 },
    #[error("length mismatch: expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("unknown classifier id `{0}`")]
    UnknownClassifier(String),
    #[error("missing column `{column}` in {path}")]
    MissingColumn { column: String, path: PathBuf },
    #[error("{path}: row {row}: {reason}")]
    BadValue {
        path: PathBuf,
        row: usize,
        reason: String,
    },
    #[error("config {origin}: line {line}: {reason}")]
    Config {
        origin: String,
        line: usize,
        reason: String,
    },
    #[error("all {0} records are degenerate or missing; nothing to aggregate")]
    NothingToAggregate(usize),
    #[error("ragged grid: {0}")]
    RaggedGrid(String),
    #[error("test set changed during the audit (hash {before} -> {after})")]
    TestSetMutated { before: String, after: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
