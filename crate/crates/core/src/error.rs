use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("edge endpoint {endpoint} out of bounds for {n} nodes (line {line})")]
    EdgeBounds { endpoint: u64, n: usize, line: usize },

    #[error("invalid record for node {node}: {msg}")]
    Record { node: usize, msg: String },

    #[error("bad magic: expected {expected}")]
    BadMagic { expected: &'static str },

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("schema hash mismatch: expected {expected}, found {found}")]
    SchemaMismatch { expected: String, found: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("feature width mismatch: expected {expected}, found {found}")]
    Width { expected: usize, found: usize },

    #[error("{0}")]
    Config(String),

    #[error("empty {0}")]
    Empty(String),

    #[error("non-finite value in parameter {0}")]
    NonFinite(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("class {class}: need {need} candidates, found {found} (short by {})", need - found)]
    InsufficientCandidates { class: String, need: usize, found: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::EdgeBounds { .. } => "bounds",
            Error::Record { .. } => "validation",
            Error::BadMagic { .. } => "magic",
            Error::Truncated { .. } => "truncated",
            Error::Format(_) => "format",
            Error::SchemaMismatch { .. } => "schema_mismatch",
            Error::Shape(_) => "shape",
            Error::Width { .. } => "width",
            Error::Config(_) => "config",
            Error::Empty(_) => "empty",
            Error::NonFinite(_) => "non_finite",
            Error::Unsupported(_) => "unsupported",
            Error::InsufficientCandidates { .. } => "insufficient_candidates",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
