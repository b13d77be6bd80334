use std::path::PathBuf;

/// Command failures. [`CliError::exit_code`] maps them onto process exit
/// codes: 2 for anything wrong with the inputs, 1 for everything else.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {field}: {reason}")]
    Config { field: String, reason: String },

    #[error("invalid {what} {}: {reason}", path.display())]
    Input {
        what: &'static str,
        path: PathBuf,
        reason: String,
    },

    #[error("cannot access {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed checks: {}", .0.join(", "))]
    ChecksFailed(Vec<String>),

    #[error(transparent)]
    Lib(crpo::Error),
}

impl CliError {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Input { .. } => 2,
            CliError::Lib(crpo::Error::Parse { .. } | crpo::Error::InvalidPair { .. }) => 2,
            CliError::Io { .. } | CliError::ChecksFailed(_) | CliError::Lib(_) => 1,
        }
    }
}

impl From<crpo::Error> for CliError {
    fn from(e: crpo::Error) -> Self {
        match e {
            crpo::Error::Config { field, reason } => CliError::Config { field, reason },
            crpo::Error::Io { path, source } => CliError::Io { path, source },
            other => CliError::Lib(other),
        }
    }
}
