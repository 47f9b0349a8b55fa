//! Error type shared by every module in the crate.

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Two shapes that must agree do not.
    #[error("{op}: dimension mismatch ({left:?} vs {right:?})")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    /// A tensor has the wrong rank for an operation.
    #[error("{op}: expected rank-{expected} tensor, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },

    /// An invalid hyperparameter or inconsistent configuration.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A stream was driven through an illegal transition.
    #[error("invalid stream state: {0}")]
    State(String),

    /// A text input (config file, frame file, checkpoint manifest) failed to parse.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
