use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the library.
///
/// Variants are grouped so that callers (the CLI in particular) can map them
/// onto distinct exit codes: validation problems, capacity refusals, and
/// solver failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("capacity exceeded: {what} is {value}, cap is {cap}")]
    Capacity {
        what: &'static str,
        value: usize,
        cap: usize,
    },

    #[error(
        "solver did not converge after {iterations} iterations (kkt residual {residual:.3e}{})",
        if *.diverging { ", coefficient norm diverging" } else { "" }
    )]
    NonConvergence {
        iterations: usize,
        residual: f64,
        diverging: bool,
    },

    #[error("diagnostic failed: {0}")]
    Diagnostic(String),

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty result: {0}")]
    Empty(String),

    #[error("undefined: {0}")]
    Undefined(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }

    /// Broad class of the error, used for exit-code mapping.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Dimension { .. }
            | Error::Argument(_)
            | Error::Parse { .. }
            | Error::Empty(_)
            | Error::Undefined(_)
            | Error::Generation(_) => ErrorKind::Validation,
            Error::Capacity { .. } => ErrorKind::Capacity,
            Error::NonConvergence { .. } | Error::Diagnostic(_) => ErrorKind::Solver,
            Error::Io(_) => ErrorKind::Io,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Capacity,
    Solver,
    Io,
}
