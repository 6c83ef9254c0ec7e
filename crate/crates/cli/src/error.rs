use std::path::PathBuf;

use hyperising::ErrorKind;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),

    #[error(transparent)]
    Core(#[from] hyperising::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{}: {message}", path.display())]
    Schema { path: PathBuf, message: String },
}

impl CliError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 0 success, 1 I/O, 2 validation, 3 capacity, 4 solver.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Json { .. } | CliError::Schema { .. } => 2,
            CliError::Io { .. } => 1,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Validation => 2,
                ErrorKind::Capacity => 3,
                ErrorKind::Solver => 4,
                ErrorKind::Io => 1,
            },
        }
    }

    /// Extra advice printed under the message.
    pub fn hint(&self) -> Option<&'static str> {
        match self {
            CliError::Core(hyperising::Error::Capacity { what, .. }) if what.contains("enumerat") => Some(
                "population quantities enumerate all 2^p states; use a smaller p or sample-based diagnostics",
            ),
            CliError::Core(hyperising::Error::Capacity { .. }) => {
                Some("the request exceeds a fixed size limit; reduce p or k")
            }
            _ => None,
        }
    }
}
