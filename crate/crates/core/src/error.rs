use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// A point or field did not have the expected number of coordinates.
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// An operation was called outside its domain (bad axis, wrong degree, ...).
    #[error("usage error: {0}")]
    Usage(String),

    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    /// The partition of unity does not sum to one (or is negative) somewhere.
    #[error("partition error: {0}")]
    Partition(String),

    /// A form was found to be nonzero on an outer face of its declared support box.
    #[error("support leak on {face}: |value| = {value:e} at {point:?}")]
    SupportLeak {
        face: String,
        value: f64,
        point: Vec<f64>,
    },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
        if expected == found {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, found })
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
