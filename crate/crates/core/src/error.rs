use thiserror::Error;

/// Errors produced by the foglab pipeline.
///
/// The variants are grouped by recovery semantics: `Schema`, `Parse`,
/// `Validation`, `Argument` and `Shape` indicate bad inputs or
/// configuration; `Format` a malformed model/weight file; `Io` and
/// `Numeric` runtime failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("argument error: {0}")]
    Argument(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    /// True when the error stems from user input or configuration rather
    /// than a runtime fault. The CLI maps these to exit code 2.
    pub fn is_usage(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::Numeric(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
