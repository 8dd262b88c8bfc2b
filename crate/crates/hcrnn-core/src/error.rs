use thiserror::Error;

/// Errors surfaced by the tensor engine, model, pipeline, and training code.
#[derive(Error, Debug)]
pub enum Error {
    /// Shape or extent mismatch between operands.
    #[error("dimension error in {op}: {msg}")]
    Dimension { op: &'static str, msg: String },

    /// Misuse of the API (e.g. backward on a non-scalar, empty input sequence).
    #[error("usage error: {0}")]
    Usage(String),

    /// A configuration that cannot be realized (bad widths, topology mismatch).
    #[error("configuration error: {0}")]
    Config(String),

    /// A forward op produced a non-finite value.
    #[error("numeric error: non-finite value produced by `{op}` at element {index}")]
    NonFinite { op: &'static str, index: usize },

    /// Checkpoint or depth-file format violation.
    #[error("format error: {0}")]
    Format(String),

    /// Manifest or record parse failure.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Input data fails a semantic check (joint count, angle bounds, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// Crop region does not intersect the image.
    #[error("crop error: {0}")]
    Crop(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn dim(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Dimension { op, msg: msg.into() }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
