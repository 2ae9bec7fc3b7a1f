use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("length mismatch: expected {expected} blocks, got {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid operator model: {0}")]
    InvalidModel(String),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("scale parameter must be positive and finite, got {0}")]
    NonPositiveScale(f64),

    #[error("linear solve failed: {0}")]
    SolveFailed(String),

    #[error("invalid stopping rule: {0}")]
    InvalidRule(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("relative error undefined: starting point is already a fixed point")]
    ZeroInitialResidual,

    #[error("coincident pair at index {0}")]
    CoincidentPair(usize),

    #[error("hyperplane system row {0} is zero")]
    ZeroRow(usize),

    #[error("hyperplane system is not normalized (row {0})")]
    NotNormalized(usize),

    #[error("two-set product iteration refused; enable the override to study the 2-cycle")]
    TwoSetsRefused,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
