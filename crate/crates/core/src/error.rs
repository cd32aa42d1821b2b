use thiserror::Error;

/// Errors reported by every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure{}: {message}", element.map(|e| format!(" on element {e}")).unwrap_or_default())]
    Numeric {
        element: Option<usize>,
        message: String,
    },

    #[error("linear solve did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    Solver { iterations: usize, residual: f64 },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn numeric(element: Option<usize>, msg: impl Into<String>) -> Error {
    Error::Numeric {
        element,
        message: msg.into(),
    }
}
