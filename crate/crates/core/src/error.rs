use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {what} expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("index {index} out of range for ensemble of {len} members")]
    MemberIndex { index: usize, len: usize },

    #[error("training diverged in member {member}: non-finite loss or gradient")]
    Divergence { member: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("{path}:{line}: malformed record: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("planner: every rollout produced a non-finite state")]
    AllRolloutsDiverged,

    #[error("expert success rate {rate:.3} is below the 0.5 floor required for demo generation")]
    ExpertTooWeak { rate: f64 },

    #[error("at env step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("serialization: {0}")]
    Serde(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(what: &'static str, expected: usize, got: usize) -> Self {
        Error::Shape { what, expected, got }
    }

    /// Process exit code for the CLI, grouped by failure category.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) => 2,
            Error::Io { .. } => 3,
            Error::Parse { .. } | Error::Serde(_) | Error::Csv(_) => 4,
            Error::Divergence { .. } | Error::AllRolloutsDiverged => 5,
            Error::ExpertTooWeak { .. } => 6,
            Error::AtStep { source, .. } => source.exit_code(),
            Error::Shape { .. } | Error::MemberIndex { .. } | Error::InvalidInput(_) | Error::InvalidState(_) => 7,
        }
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::shape(what, expected, got));
    }
    Ok(())
}
