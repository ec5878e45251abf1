use std::path::PathBuf;

use crate::manifest::Violation;

pub type Result<T> = std::result::Result<T, AuditError>;

#[derive(Debug, thiserror::Error)]
pub enum AuditError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("degenerate (zero-norm) vector{}", match .row { Some(r) => format!(" at row {r}"), None => String::new() })]
    DegenerateVector { row: Option<usize> },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("source {source_id:?} needs {quota} distinct targets but the pool has {available}")]
    InsufficientTargets {
        source_id: String,
        quota: usize,
        available: usize,
    },

    #[error("{what} {value} out of range (max {max})")]
    OutOfRange {
        what: &'static str,
        value: usize,
        max: usize,
    },

    #[error("label not found: {0:?}")]
    LabelNotFound(String),

    #[error("skewness undefined: second central moment is zero")]
    UndefinedSkew,

    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),

    #[error("SC-WEAT denominator is zero (all attribute cosines equal)")]
    DegenerateDenominator,

    #[error("size error: {0}")]
    Size(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("invalid manifest: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidManifest(Vec<Violation>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("row {row}: {source}")]
    AtRow {
        row: usize,
        #[source]
        source: Box<AuditError>,
    },
}

impl AuditError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AuditError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_row(self, row: usize) -> Self {
        AuditError::AtRow {
            row,
            source: Box::new(self),
        }
    }
}
