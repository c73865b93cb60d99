use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported tensor order {0} (only 3 and 4 are supported)")]
    UnsupportedOrder(usize),

    #[error("invalid tensor dimensions {dims:?}: {reason}")]
    InvalidDims { dims: Vec<usize>, reason: String },

    #[error("mode {mode} out of range for an order-{order} tensor")]
    ModeOutOfRange { mode: usize, order: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid sparse tensor: {0}")]
    InvalidSparse(String),

    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),

    #[error("penalty parameter must be positive, got {0}")]
    InvalidPenalty(f64),

    #[error("matrix is not positive definite (pivot {pivot} = {value})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("tensor has zero Frobenius norm")]
    ZeroTensor,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid partition plan: {0}")]
    Partition(String),

    #[error("message protocol violation: {0}")]
    Protocol(String),

    #[error("malformed tensor file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
