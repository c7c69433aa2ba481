use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed interchange document. `offset` is the byte offset of the problem.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    /// Malformed YOLO label text. `line` is 1-based.
    #[error("label parse error on line {line}: {message}")]
    LabelParse { line: usize, message: String },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("codec error: {0}")]
    Codec(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("infeasible split: {0}")]
    Infeasible(String),

    #[error("split repair did not converge after {iterations} iterations; violated: {violated}")]
    NonConvergence { iterations: usize, violated: String },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("oracle limit exceeded: {0}")]
    OracleLimit(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error class: 2 parse, 3 io, 4 constraint, 5 undefined metric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. }
            | Error::LabelParse { .. }
            | Error::Manifest(_)
            | Error::Config(_)
            | Error::Validation(_)
            | Error::Codec(_)
            | Error::Geometry(_)
            | Error::OracleLimit(_) => 2,
            Error::Io { .. } => 3,
            Error::Infeasible(_) | Error::NonConvergence { .. } => 4,
            Error::UndefinedMetric(_) => 5,
        }
    }
}
