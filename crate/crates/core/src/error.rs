use std::path::PathBuf;

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("length error: {0}")]
    Length(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported rate: cannot resample {from} fps to {to} fps")]
    UnsupportedRate { from: f64, to: f64 },
    #[error("range error: {0}")]
    Range(String),
    #[error("lifecycle error: {0}")]
    Lifecycle(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("coverage error: {0}")]
    Coverage(String),
    #[error("contract error: {0}")]
    Contract(String),
    #[error("non-finite value in {0}")]
    Numeric(String),
    #[error("covariance error: {0}")]
    Covariance(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
