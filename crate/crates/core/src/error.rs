use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad user-facing parameter: fractions, sizes, ratios, flags.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed or inconsistent input data.
    #[error("data error: {0}")]
    Data(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    /// A pool or batch invariant would be broken by the requested operation.
    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("malformed posterior at row {row}: {message}")]
    MalformedPosterior { row: usize, message: String },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("training error: {0}")]
    Training(String),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Wraps another error with the active-learning iteration it happened in.
    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        match self {
            e @ Error::AtIteration { .. } => e,
            other => Error::AtIteration {
                iteration,
                source: Box::new(other),
            },
        }
    }

    /// The innermost error, with iteration context peeled off.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtIteration { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit status for the command-line front end:
    /// 1 configuration, 2 data, 3 runtime divergence.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Config(_) | Error::Invariant(_) => 1,
            Error::Data(_)
            | Error::Parse { .. }
            | Error::MalformedPosterior { .. }
            | Error::Shape { .. }
            | Error::Evaluation(_)
            | Error::Training(_) => 2,
            Error::Divergence { .. } => 3,
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 1,
            Error::Io { .. } => 2,
            Error::AtIteration { .. } => unreachable!("root() strips iteration context"),
        }
    }
}
