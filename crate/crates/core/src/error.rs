use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong inside the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid measurement for {vital}: {value}")]
    InvalidMeasurement { vital: &'static str, value: f64 },

    #[error("invalid category {label:?} for {vital}")]
    InvalidCategory { vital: &'static str, label: String },

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("episode already complete for agent {agent}")]
    EpisodeComplete { agent: &'static str },

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("numerical failure in episode {episode} ({agent}, subject {subject}): {reason}")]
    TrainingDiverged {
        episode: usize,
        agent: &'static str,
        subject: String,
        reason: String,
    },

    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },

    #[error("unsupported model schema version {found} (expected {expected})")]
    UnsupportedVersion { found: u64, expected: u64 },

    #[error("schema error: missing columns {missing:?}")]
    Schema { missing: Vec<String> },

    #[error("unrecoverable gap: first value of {column} missing for subject {subject}")]
    UnrecoverableGap { column: String, subject: String },

    #[error("row {row}: {message}")]
    Row { row: u64, message: String },

    #[error("invalid synthesis spec: {0}")]
    Spec(String),

    #[error("sweep point {param}={value}: {source}")]
    SweepPoint {
        param: &'static str,
        value: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by non-finite arithmetic, possibly wrapped by a sweep point.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Numerical(_) | Error::TrainingDiverged { .. } => true,
            Error::SweepPoint { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
