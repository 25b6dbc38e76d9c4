use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("interaction matrix is not symmetric: |A[{i}][{j}] - A[{j}][{i}]| = {diff:e}")]
    Asymmetric { i: usize, j: usize, diff: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("site index {index} out of range for n = {n}")]
    SiteOutOfRange { index: usize, n: usize },

    #[error("invalid pins: {0}")]
    InvalidPins(String),

    #[error("n = {n} exceeds the enumeration cap of {cap} spins")]
    CapExceeded { n: usize, cap: usize },

    #[error("direction vector must have unit norm, got {0}")]
    NotUnitVector(f64),

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("extremal eigenvalue iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("the product closed form requires a zero interaction matrix")]
    NotProductModel,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("model file: {0}")]
    ModelFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of a numerical procedure on otherwise valid input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. } | Error::CapExceeded { .. } | Error::Degenerate(_)
        )
    }
}
