use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("atom cap exceeded: {requested} atoms requested, cap is {cap}")]
    Capacity { requested: u128, cap: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{}:{line}: {msg}", path.display())]
    Format {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("branching {m} exceeds the {capacity} children of a cube; smallest admissible base is {}", .min_base.map_or("none".to_string(), |b| b.to_string()))]
    InfeasibleBranching {
        m: u64,
        capacity: u64,
        min_base: Option<u64>,
    },

    #[error("cube at level {level} has {occupied} occupied children but branching is {m}; the covering constant is too small")]
    CoveringConstant { level: usize, occupied: usize, m: u64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}
