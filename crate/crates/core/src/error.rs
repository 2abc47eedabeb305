use thiserror::Error;

/// Errors raised by the merging engine, the toy pipeline and the bench harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("token index {index} out of range for {len} tokens")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("duplicate token index {0}")]
    DuplicateIndex(usize),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("window of size {0} is degenerate (need at least 2 tokens)")]
    DegenerateWindow(usize),

    #[error("invalid value for `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("inconsistent merge plan: {0}")]
    InconsistentPlan(String),

    #[error("invalid layer sequence: {0}")]
    InvalidLayerSequence(String),

    #[error("stale cache entry for layer {layer}, window {window}")]
    StaleCache { layer: usize, window: usize },

    #[error("config: {0}")]
    Config(String),

    #[error("sweep run {index} ({label}) failed: {source}")]
    SweepRun {
        index: usize,
        label: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}
