use thiserror::Error;

/// Errors produced by the estimation and simulation routines.
#[derive(Debug, Error)]
pub enum SyncError {
    /// A clock skew that must be strictly positive was zero or negative.
    #[error("non-positive clock skew {0}")]
    NonPositiveSkew(f64),

    /// Estimate extraction was attempted on a state whose first mean
    /// component (the inverse-skew estimate) is not strictly positive.
    #[error("inverse-skew component {0} is not strictly positive")]
    NonPositiveInverseSkew(f64),

    /// A distribution carried no information in any direction, so a mean
    /// (and hence an estimate) cannot be extracted.
    #[error("distribution is non-informative; no estimate can be extracted")]
    NonInformative,

    /// A covariance or precision matrix failed validation.
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    /// The summed precision of a fusion is singular but not zero, so the
    /// fused distribution has no usable moment form.
    #[error("singular precision sum in Gaussian fusion")]
    SingularFusion,

    /// An observation matrix was singular (degenerate time stamps).
    #[error("singular observation: {0}")]
    SingularObservation(String),

    /// A message could not be computed because the design matrix of the
    /// destination node is rank deficient.
    #[error("rank-deficient design matrix in message computation")]
    SingularMessage,

    /// Time-stamp rounds would overlap with the requested pacing.
    #[error(
        "rounds overlap: inter-round interval {delta} ns must exceed \
         turnaround {turnaround} ns + 2 x delay {delay} ns"
    )]
    OverlappingRounds {
        delta: f64,
        turnaround: f64,
        delay: f64,
    },

    /// Time stamps that must be strictly increasing were not.
    #[error("non-increasing time stamps: {0}")]
    NonIncreasingStamps(String),

    /// A topology or scenario file failed validation.
    #[error("configuration error: {0}")]
    Config(String),

    /// The factor graph is structurally unable to run belief propagation.
    #[error("graph error: {0}")]
    Graph(String),

    /// JSON (de)serialization failure for scenario or topology files.
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    /// Filesystem failure, annotated with the offending path.
    #[error("I/O error at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, SyncError>;

impl SyncError {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        SyncError::Io {
            path: path.into(),
            source,
        }
    }
}
