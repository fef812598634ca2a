use std::fmt;
use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the allocation library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A solver could not bracket or converge; signals a degenerate input.
    #[error("internal error: {0}")]
    Internal(String),

    /// A scenario document could not be parsed.
    #[error("{0}")]
    Parse(ParseError),

    /// The brute-force oracle declined an instance that is too large.
    #[error("oracle refused instance: {0}")]
    Refused(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// A scenario parse failure with its position in the document.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    /// 1-based line number; `None` for whole-document problems.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {}: {}", line, self.message),
            None => f.write_str(&self.message),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
