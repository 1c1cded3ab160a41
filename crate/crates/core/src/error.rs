use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("category index {index} out of range for feature `{feature}` (cardinality {cardinality})")]
    OutOfRange {
        feature: String,
        index: usize,
        cardinality: usize,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error in query `{query_id}`: {rule}")]
    Validation { query_id: String, rule: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("label error: {0}")]
    Label(String),

    #[error("scoring error: {0}")]
    Scoring(String),

    #[error("ranking error: {0}")]
    Ranking(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("schema fingerprint mismatch: checkpoint has {expected}, schema has {found}")]
    FingerprintMismatch { expected: String, found: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
