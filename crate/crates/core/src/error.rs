use std::path::PathBuf;

use thiserror::Error;

/// Coarse failure category, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numeric,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported format: {0}")]
    Unsupported(String),

    #[error("truncated stream: {0}")]
    Truncated(String),

    #[error("index out of bounds: {0}")]
    Bounds(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("missing score for segment (w={w}, h={h}, t={t}) of {clip_id} at qp {qp}")]
    MissingScore {
        clip_id: String,
        qp: u8,
        w: usize,
        h: usize,
        t: usize,
    },

    #[error("incomplete score table for {clip_id} at qp {qp}: {missing} segment(s) missing, first gap (w={first_w}, h={first_h}, t={first_t})")]
    IncompleteTable {
        clip_id: String,
        qp: u8,
        missing: usize,
        first_w: usize,
        first_h: usize,
        first_t: usize,
    },

    #[error("value out of range: {0}")]
    Range(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("corrupt file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },

    #[error("unsupported file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> ErrorCategory {
        use Error::*;
        match self {
            Config(_) | Unsupported(_) | Version { .. } => ErrorCategory::Config,
            Format(_) | Truncated(_) | MissingData(_) | MissingScore { .. }
            | IncompleteTable { .. } | Range(_) | DegenerateSample(_) | InsufficientData(_)
            | EmptyInput(_) | Corrupt { .. } => ErrorCategory::Data,
            Bounds(_) | Shape(_) | Numeric(_) | Contract(_) => ErrorCategory::Numeric,
            Io { .. } => ErrorCategory::Io,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
