use thiserror::Error;

/// Errors raised by the estimators and tests.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not positive definite (smallest eigenvalue {smallest_eigenvalue:e}, largest {largest_eigenvalue:e})")]
    NotPositiveDefinite {
        smallest_eigenvalue: f64,
        largest_eigenvalue: f64,
    },

    #[error("matrix is singular: eigenvalue #{index} = {value:e} is below tolerance")]
    SingularEigenvalue { index: usize, value: f64 },

    #[error("singular predecessor design for column {column} (condition estimate {condition:e})")]
    SingularDesign { column: usize, condition: f64 },

    #[error("degenerate residual variance for column {column}")]
    DegenerateResidual { column: usize },

    #[error("band width k = {k} requires more samples (n = {n}, need n > k + {margin})")]
    BandTooWide { k: usize, n: usize, margin: usize },

    #[error("k must satisfy k <= n/10 (k = {k}, n = {n}); override with --force-k")]
    BandGuard { k: usize, n: usize },

    #[error("need at least {required} samples, got {found}")]
    TooFewSamples { required: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("variance estimate is not positive ({0:e})")]
    NonPositiveVariance(f64),

    #[error("eigenvalue iteration did not converge")]
    NoConvergence,
}

impl Error {
    /// Whether the error stems from malformed or out-of-contract input rather
    /// than a numerical breakdown on otherwise valid input.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch { .. }
                | Error::InvalidInput(_)
                | Error::BandTooWide { .. }
                | Error::BandGuard { .. }
                | Error::TooFewSamples { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
