use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("design infeasible: {0}")]
    DesignInfeasible(String),

    #[error("exhaustive enumeration infeasible: {count} samples exceeds cap {cap}")]
    OracleInfeasible { count: u128, cap: u64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate population: {0}")]
    DegeneratePopulation(String),

    #[error("internal consistency error: {0}")]
    InternalConsistency(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: u64, message: String },

    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
