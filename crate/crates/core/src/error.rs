use thiserror::Error;

/// Errors produced by the observer library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("empty intersection at coordinate {index}: lower {lower} > upper {upper}")]
    EmptyIntersection {
        index: usize,
        lower: f64,
        upper: f64,
    },

    #[error("node {node} out of range for graph with {nodes} nodes")]
    NodeOutOfRange { node: usize, nodes: usize },

    #[error("graph is not strongly connected: node {to} unreachable from node {from}")]
    NotStronglyConnected { from: usize, to: usize },

    #[error("simplex pivot magnitude {0:e} below threshold")]
    DegeneratePivot(f64),

    #[error("invalid selection assignment: {0}")]
    InvalidAssignment(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("validation error in `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn shape(context: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::ShapeMismatch {
            context,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    /// True for errors caused by malformed user input (scenario files, bounds).
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Stage { source, .. } => source.is_validation(),
            other => matches!(
                other,
                Error::Validation { .. } | Error::Parse(_) | Error::InvalidInput(_) | Error::ShapeMismatch { .. }
            ),
        }
    }

    /// Tags the error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
