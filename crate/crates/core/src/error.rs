use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A value is outside the domain an operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed or inconsistent input (shapes, indices, non-finite entries).
    #[error("input error: {0}")]
    Input(String),

    /// The exact oracle refuses games larger than its configured limit.
    #[error("game with {players} players exceeds the exact enumeration limit of {limit}")]
    TooLarge { players: usize, limit: usize },

    /// A computation produced a non-finite value.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Training diverged (non-finite loss) at the given epoch.
    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String },

    /// The efficiency audit found epochs whose values do not sum to U(N).
    #[error("efficiency audit failed at epochs {epochs:?} (max violation {max_violation:e})")]
    Audit {
        epochs: Vec<usize>,
        max_violation: f64,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures that are numeric rather than caused by bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Numeric(_) | Error::Diverged { .. } | Error::Audit { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
