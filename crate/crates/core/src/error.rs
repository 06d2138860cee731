use std::path::PathBuf;

use thiserror::Error;

use crate::dataset::GroupKey;

pub type Result<T, E = FdrError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum FdrError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A record in an input file could not be parsed. `row` is 1-based and
    /// counts data rows (the CSV header is row 0).
    #[error("row {row}: {reason}")]
    Malformed { row: usize, reason: String },

    #[error("bad header: {0}")]
    BadHeader(String),

    #[error("file truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("group {group} is empty ({context})")]
    EmptyGroup { group: GroupKey, context: String },

    #[error("attribute group a={attribute} is empty ({context})")]
    EmptyAttributeGroup { attribute: u8, context: String },

    #[error("split '{0}' would be empty")]
    EmptySplit(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite gradient in layer {layer}")]
    NonFiniteGradient { layer: usize },

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("all {} runs failed: {}", .0.len(), .0.join("; "))]
    AllRunsFailed(Vec<String>),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl FdrError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FdrError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(row: usize, reason: impl Into<String>) -> Self {
        FdrError::Malformed {
            row,
            reason: reason.into(),
        }
    }

    /// Stable machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            FdrError::Io { .. } => "io",
            FdrError::Malformed { .. } => "malformed",
            FdrError::BadHeader(_) => "bad_header",
            FdrError::Truncated { .. } => "truncated",
            FdrError::DimensionMismatch { .. } => "dimension_mismatch",
            FdrError::EmptyGroup { .. } => "empty_group",
            FdrError::EmptyAttributeGroup { .. } => "empty_attribute_group",
            FdrError::EmptySplit(_) => "empty_split",
            FdrError::InvalidArgument(_) => "invalid_argument",
            FdrError::Config(_) => "config",
            FdrError::NonFiniteGradient { .. } => "non_finite_gradient",
            FdrError::Diverged { .. } => "diverged",
            FdrError::AllRunsFailed(_) => "all_runs_failed",
            FdrError::Json(_) => "json",
        }
    }
}
