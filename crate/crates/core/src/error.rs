use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("corrupt sample `{sample}`: {reason}")]
    CorruptSample { sample: String, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("missing organ: {0}")]
    MissingOrgan(String),
    #[error("invalid tree statistics: {0}")]
    InvalidStats(String),

    #[error("no material for class {0}")]
    MissingMaterial(i32),
    #[error("elastic system has no fixed vertex")]
    UnconstrainedSystem,
    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    SolverFailure { iterations: usize, residual: f64 },
    #[error("point {point} lies outside the lattice")]
    LatticeCoverage { point: usize },

    #[error("no minimum point count for instance class {0}")]
    MissingThreshold(i32),
    #[error("degenerate statistics: {0}")]
    DegenerateStats(String),

    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid prediction: {0}")]
    InvalidPrediction(String),
    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn corrupt(sample: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::CorruptSample {
            sample: sample.into(),
            reason: reason.into(),
        }
    }

    /// Coarse failure category, used by the command line for exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Parse { .. } | Error::CorruptSample { .. } | Error::Io { .. } | Error::Json(_) => ErrorKind::Data,
            Error::SolverFailure { .. } | Error::UnconstrainedSystem | Error::DegenerateStats(_) => {
                ErrorKind::Numerical
            }
            _ => ErrorKind::Config,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
