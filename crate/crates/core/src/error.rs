use thiserror::Error;

/// Errors produced by the identification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("{name} is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { name: String, asymmetry: f64 },

    #[error("{name} is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { name: String, min_eigenvalue: f64 },

    #[error("{name} contains non-finite entries")]
    NonFinite { name: String },

    #[error("rollout {rollout} exploded at step {step} (state norm {norm:e})")]
    Explosion {
        rollout: usize,
        step: usize,
        norm: f64,
    },

    #[error("degenerate input design: {0}")]
    DegenerateDesign(String),

    #[error("no connected, mean-square stable network after {retries} attempts")]
    NoAdmissibleNetwork { retries: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty rollout batch")]
    EmptyBatch,

    #[error("horizon mismatch: expected {expected}, got {actual}")]
    HorizonMismatch { expected: usize, actual: usize },

    #[error("failed to parse {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(
        context: &'static str,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::Dimension {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// True for failures caused by the numbers themselves rather than by
    /// malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Explosion { .. } | Error::NonFinite { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
