use std::fmt;
use std::path::Path;

use dmpnn_core::Error;

/// Process exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    Failure = 1,
    Usage = 2,
}

/// A failed run: a message for standard error plus the status to exit with.
#[derive(Debug)]
pub struct CliError {
    pub exit: Exit,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            exit: Exit::Usage,
            message: message.into(),
        }
    }

    pub fn failure(message: impl Into<String>) -> Self {
        Self {
            exit: Exit::Failure,
            message: message.into(),
        }
    }

    /// Wraps a problem with a user-supplied input file.
    pub fn input(path: &Path, err: impl fmt::Display) -> Self {
        Self::usage(format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        let exit = match err {
            Error::DuplicateVertex(_)
            | Error::DanglingEndpoint { .. }
            | Error::EmptyLabelSet { .. }
            | Error::LabelOutOfRange { .. }
            | Error::AlreadyReversed
            | Error::Precondition(_)
            | Error::Guard(_)
            | Error::GraphTooLarge { .. }
            | Error::NoEdges
            | Error::RelationOutOfRange { .. }
            | Error::Infeasible(_)
            | Error::EmptyDataset
            | Error::Checkpoint(_)
            | Error::Json(_) => Exit::Usage,
            Error::DimensionMismatch { .. }
            | Error::NonFinite
            | Error::InvalidIsomorphism(_)
            | Error::NonFiniteGradient(_)
            | Error::Timeout
            | Error::Io(_) => Exit::Failure,
        };
        Self {
            exit,
            message: err.to_string(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
