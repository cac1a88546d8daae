use thiserror::Error;

use crate::data::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empirical distribution needs at least one value")]
    EmptySample,

    #[error("weights sum to zero")]
    ZeroTotalWeight,

    #[error("weight at position {index} is {value}; weights must be finite and non-negative")]
    InvalidWeight { index: usize, value: f64 },

    #[error("value at position {index} is not finite")]
    NonFiniteValue { index: usize },

    #[error("length mismatch: {what} has {found} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("probability {0} outside (0, 1]")]
    InvalidProbability(f64),

    #[error("invalid tau grid: {0}")]
    InvalidGrid(String),

    #[error("dataset failed validation: {0}")]
    Validation(ValidationReport),

    #[error("cell {cell:?} is too small for estimation: {reason}")]
    UndersizedCell { cell: Vec<i64>, reason: String },

    #[error("no cells available for aggregation")]
    NoCells,

    #[error("estimation infeasible: {0}")]
    Infeasible(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("input error at line {line}: {message}")]
    Input { line: u64, message: String },

    #[error("{0}")]
    Csv(#[from] csv::Error),

    #[error("{0}")]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}
