use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value at tape node {node}")]
    NumericalOverflow { node: usize },

    #[error("derivative order {0} is not supported (k must be at most 2)")]
    UnsupportedOrder(usize),

    #[error("input has dimension {got}, expected {expected}")]
    InputShape { expected: usize, got: usize },

    #[error("input dimension {0} is not supported here")]
    UnsupportedDimension(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("training diverged at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("dataset is empty")]
    EmptyData,

    #[error("correlation is undefined for zero-variance input")]
    UndefinedCorrelation,

    #[error("{path}:{line}: {message}")]
    ConfigLine {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
