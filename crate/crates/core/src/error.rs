use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("coefficient length mismatch: expected {expected}, got {actual}")]
    CoefficientLength { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:e})")]
    CgNotConverged { iterations: usize, residual: f64 },

    #[error("degenerate GCV denominator ({0:e})")]
    DegenerateGcv(f64),

    #[error("unsupported criterion: {0}")]
    UnsupportedCriterion(&'static str),

    #[error("ground truth image required for {0}")]
    MissingGroundTruth(&'static str),

    #[error("malformed PGM at byte {offset}: {message}")]
    Pgm { offset: usize, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
