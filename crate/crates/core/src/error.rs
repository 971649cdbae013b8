use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A physical or numerical parameter is out of its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Parameters are individually valid but inconsistent with each other.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data has the wrong shape or content.
    #[error("invalid input: {0}")]
    Input(String),

    #[error("index {index} out of range for {what} (len {len})")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// The requested run would exceed the configured resource cap.
    #[error("resource cap exceeded: {0}")]
    Resource(String),

    /// An internal consistency check failed.
    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    /// Process exit status for the command-line front end: 1 I/O, 2
    /// configuration or parameter, 3 resource cap, 4 internal invariant.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Parameter(_) | Error::Config(_) | Error::Input(_) | Error::Parse { .. } => 2,
            Error::Resource(_) => 3,
            Error::Invariant(_) | Error::Index { .. } => 4,
            Error::Io(_) => 1,
        }
    }
}
