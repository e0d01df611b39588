//! Crate-wide error type. Every fallible public entry point returns
//! [`Result`] with this error; panics are reserved for internal logic bugs.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A tensor or config dimension does not satisfy an operation's contract.
    #[error("shape error: {0}")]
    Shape(String),

    /// A configuration value is out of range or inconsistent with its peers.
    #[error("config error: {0}")]
    Config(String),

    /// A checkpoint file is malformed or does not match the expected layout.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// A dataset file (image or annotation) is missing or malformed.
    #[error("dataset error: {0}")]
    Dataset(String),

    /// Training was aborted by a stability guard (NaN gradient, divergence).
    #[error("training aborted: {0}")]
    Training(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn checkpoint(msg: impl Into<String>) -> Self {
        Error::Checkpoint(msg.into())
    }
    pub fn dataset(msg: impl Into<String>) -> Self {
        Error::Dataset(msg.into())
    }
    pub fn training(msg: impl Into<String>) -> Self {
        Error::Training(msg.into())
    }
}
