use thiserror::Error;

/// Errors produced by the library.
///
/// `Config` maps to CLI exit code 2, everything else to exit code 3.
#[derive(Debug, Error)]
pub enum Error {
    /// A physical quantity is outside its valid domain (position off the
    /// deck, negative time, frequency above Nyquist, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// An argument violates an operation precondition.
    #[error("invalid argument: {0}")]
    Invalid(String),

    /// Experiment configuration failed schema or semantic validation.
    /// `path` is the dotted field path inside the config document.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    /// Two maps or aggregates live on different grids or lanes.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// Input data is unusable (too short, all-zero, unparseable values).
    #[error("data error: {0}")]
    Data(String),

    /// A persisted file does not match its expected format.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
