use thiserror::Error;

/// Errors raised by model construction, estimation and the surrounding I/O.
#[derive(Debug, Error)]
pub enum CmglError {
    /// Malformed or out-of-domain user input.
    #[error("invalid input: {0}")]
    Input(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// `B` is singular where the link needs its inverse.
    #[error("B is singular; the {link} link requires an invertible argument")]
    SingularB { link: &'static str },

    #[error("covariance matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("optimizer did not converge within {iterations} iterations")]
    MaxIterExceeded { iterations: usize },

    #[error("no positive definite starting point found")]
    InfeasibleStart,

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("Gram matrix tr(W_k W_l) is numerically singular (reciprocal condition {rcond:e})")]
    SingularGram { rcond: f64 },

    #[error("information matrix is numerically singular (reciprocal condition {rcond:e})")]
    SingularInformation { rcond: f64 },

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("fit under the {link} link failed: {source}")]
    FitFailed {
        link: String,
        #[source]
        source: Box<CmglError>,
    },

    #[error("period {period}: {source}")]
    Period {
        period: String,
        #[source]
        source: Box<CmglError>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("TOML error: {0}")]
    Toml(#[from] toml::de::Error),
}

impl CmglError {
    /// True for failures caused by the caller's input rather than by the numerics.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            CmglError::Input(_)
                | CmglError::DimensionMismatch { .. }
                | CmglError::Io { .. }
                | CmglError::Csv(_)
                | CmglError::Json(_)
                | CmglError::Toml(_)
        )
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        CmglError::Input(msg.into())
    }
}

pub type Result<T, E = CmglError> = std::result::Result<T, E>;
