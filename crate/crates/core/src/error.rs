//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input data; `row` is the 1-based data row (header excluded).
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("iteration did not converge after {iterations} iterations (gradient sup-norm trace: {trace:?})")]
    NonConvergence { iterations: usize, trace: Vec<f64> },

    #[error("monotone likelihood: {0}; consider a penalized fit")]
    MonotoneLikelihood(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("degenerate ensemble: every raw coefficient is zero")]
    DegenerateEnsemble,

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),

    #[error("bundle: {0}")]
    Bundle(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn row(row: usize, msg: impl Into<String>) -> Self {
        Error::Row { row, message: msg.into() }
    }

    /// Wraps the error with a short description of where it happened.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context { context: context.into(), source: Box::new(self) }
    }

    /// Process exit code: 2 validation, 3 numerical failure, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Context { source, .. } => source.exit_code(),
            Error::Row { .. }
            | Error::Invalid(_)
            | Error::Config(_)
            | Error::Bundle(_)
            | Error::Csv(_)
            | Error::Json(_) => 2,
            Error::NonConvergence { .. }
            | Error::MonotoneLikelihood(_)
            | Error::Singular(_)
            | Error::DegenerateEnsemble => 3,
            Error::Io(_) => 4,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_category() {
        assert_eq!(Error::invalid("x").exit_code(), 2);
        assert_eq!(Error::DegenerateEnsemble.exit_code(), 3);
        let io = Error::Io(std::io::Error::new(std::io::ErrorKind::NotFound, "gone"));
        assert_eq!(io.context("loading").exit_code(), 4);
    }
}
