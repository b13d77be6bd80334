use std::path::PathBuf;

use crate::types::Transformation;

/// Errors raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration field failed validation. `field` is the dotted path
    /// of the offending field, e.g. `train.steps`.
    #[error("{field}: {reason}")]
    Config { field: String, reason: String },

    /// The instance carries no recorded answer for this transformation.
    #[error("oracle gap: no answer recorded for {0}")]
    OracleGap(Transformation),

    #[error("static questions cannot form answer-changing pairs")]
    StaticPairs,

    #[error("missing prediction for pair `{pair_id}` side {side}")]
    MissingPrediction { pair_id: String, side: String },

    #[error("invalid pair record `{pair_id}`: {reason}")]
    InvalidPair { pair_id: String, reason: String },

    #[error("invalid rollout group: {0}")]
    InvalidGroup(String),

    /// A JSON-lines file had a bad record.
    #[error("{}:{line}: {reason}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
