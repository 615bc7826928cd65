use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A non-finite value appeared in a numerical computation.
    #[error("numerical error at {location}: {detail}")]
    Numerical { location: String, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("initial-condition sampling failed after {attempts} attempts: {detail}")]
    Sampling { attempts: usize, detail: String },

    #[error("coordinate singularity: {0}")]
    Singularity(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("tape error: {0}")]
    Tape(String),

    #[error("training diverged at {phase} {index}: {detail}")]
    TrainingDiverged {
        phase: &'static str,
        index: usize,
        detail: String,
    },

    #[error("corrupt dataset at {path}: {detail}")]
    CorruptDataset { path: PathBuf, detail: String },

    #[error("io error{}: {source}", trajectory.map(|i| format!(" (trajectory {i})")).unwrap_or_default())]
    Io {
        trajectory: Option<usize>,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn numerical(location: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numerical {
            location: location.into(),
            detail: detail.into(),
        }
    }

    /// Prefixes the location of a numerical error, leaving other variants untouched.
    pub(crate) fn within(self, context: impl std::fmt::Display) -> Self {
        match self {
            Error::Numerical { location, detail } => Error::Numerical {
                location: format!("{context}, {location}"),
                detail,
            },
            other => other,
        }
    }

    /// Short machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Numerical { .. } => "numerical",
            Error::Config(_) => "config",
            Error::Sampling { .. } => "sampling",
            Error::Singularity(_) => "singularity",
            Error::Shape(_) => "shape",
            Error::Tape(_) => "tape",
            Error::TrainingDiverged { .. } => "training_diverged",
            Error::CorruptDataset { .. } => "corrupt_dataset",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(source: std::io::Error) -> Self {
        Error::Io {
            trajectory: None,
            source,
        }
    }
}
