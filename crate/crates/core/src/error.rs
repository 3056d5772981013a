use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the augmentation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("non-binary mask: {0}")]
    NonBinaryMask(String),

    #[error("tensor format error: {0}")]
    Format(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("unknown vocabulary id {0}")]
    UnknownToken(usize),

    #[error("missing attention cache entry for step {step}, block {block}")]
    MissingCacheEntry { step: usize, block: usize },

    #[error("processor configuration error: {0}")]
    Processor(String),

    #[error("training diverged at step {step}: loss is {loss}")]
    Diverged { step: usize, loss: f32 },

    #[error("{0}")]
    Grammar(String),

    #[error("ambiguous phrase {phrase:?}: candidates {candidates:?}")]
    Ambiguous { phrase: String, candidates: Vec<String> },

    #[error("no palette entry for phrase {0:?}")]
    NoPalette(String),

    #[error("planner failure: {0}")]
    Planner(String),

    #[error("malformed reply: {reason}")]
    Schema { reason: String, raw: String },

    #[error("transport error: {0}")]
    Transport(String),

    #[error("request timed out after {0:?}")]
    Timeout(std::time::Duration),

    #[error("empty comparison region: {0}")]
    EmptyRegion(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category, used for CLI exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Shape(_) | Error::InvalidValue(_) | Error::NonBinaryMask(_) => "invalid-input",
            Error::Format(_) | Error::Truncated { .. } => "format",
            Error::UnknownToken(_) => "vocabulary",
            Error::MissingCacheEntry { .. } | Error::Processor(_) => "attention",
            Error::Diverged { .. } => "training",
            Error::Grammar(_) | Error::Planner(_) => "planner",
            Error::Ambiguous { .. } | Error::NoPalette(_) => "segmentation",
            Error::Schema { .. } => "schema",
            Error::Transport(_) | Error::Timeout(_) => "transport",
            Error::EmptyRegion(_) => "metrics",
            Error::Config(_) => "config",
            Error::Io { .. } | Error::Image(_) => "io",
        }
    }
}
