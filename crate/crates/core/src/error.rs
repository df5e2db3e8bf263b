//! Crate-wide error type.
//!
//! Variants map onto the failure categories the CLI reports through exit
//! codes: configuration/usage problems, bad data (I/O, parse, shape and
//! domain violations), and numerical failures.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    /// Precondition or shape violation on an operation's inputs.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterative routine failed to converge or produced non-finite values.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Malformed file content; `offset` is the byte position of the problem.
    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: usize, msg: String },

    /// Invalid configuration or config-grammar input.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn parse(offset: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            msg: msg.into(),
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
