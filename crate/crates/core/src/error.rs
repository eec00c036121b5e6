use thiserror::Error;

/// Errors raised by graph construction, eigensolves and the SDA solver.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("operands live on different sparsity patterns")]
    PatternMismatch,

    #[error("invalid edge ({0}, {1})")]
    InvalidEdge(usize, usize),

    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),

    #[error("negative weight {weight} on edge ({i}, {j})")]
    NegativeWeight { i: usize, j: usize, weight: f64 },

    #[error("matrix has non-finite entries")]
    NonFinite,

    #[error("cluster index k = {k} out of range for n = {n}")]
    KOutOfRange { k: usize, n: usize },

    #[error("eigenvalues {k} and {} are coalesced (gap {gap:e}); gradient undefined", k + 1)]
    CoalescedPair { k: usize, gap: f64 },

    #[error("norm constraint is degenerate: ||L*(L(E))|| = {0:e}")]
    DegenerateConstraint(f64),

    #[error("no upper bound for epsilon found below {0}")]
    NoUpperBound(f64),

    #[error("penalty schedule exhausted without a nonnegative minimizer (min weight {min_weight:e})")]
    PenaltyScheduleExhausted { min_weight: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
