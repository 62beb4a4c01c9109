use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{name} is outside its domain: got {value}")]
    Domain { name: &'static str, value: f64 },

    #[error("linear predictor overflow at row {row}: x'beta = {eta}")]
    Overflow { row: usize, eta: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("non-finite value while evaluating {0}")]
    NonFinite(&'static str),

    #[error("tail truncation not reached within {cap} terms (lambda = {lambda}, alpha = {alpha})")]
    TruncationCap { cap: u64, lambda: f64, alpha: f64 },

    #[error("quadrature did not converge: achieved error {achieved:e} > requested {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("design matrix is rank deficient; collinear columns: {}", columns.join(", "))]
    Collinear { columns: Vec<String> },

    #[error("response is identically zero; dispersion is not identified")]
    AllZeroResponse,

    #[error("information matrix is not positive definite")]
    NotPositiveDefinite,
}
