use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate 6D rotation{}: {detail}", joint.map(|j| format!(" at joint {j}")).unwrap_or_default())]
    DegenerateRotation { joint: Option<usize>, detail: String },

    #[error("matrix is not a rotation: {0}")]
    NotOrthonormal(String),

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape { context: &'static str, expected: String, actual: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{what} parse error at byte {offset}: {message}")]
    Parse { what: &'static str, offset: u64, message: String },

    #[error("unsupported skeleton: {joint_count} joints (expected 24)")]
    UnsupportedSkeleton { joint_count: usize },

    #[error("no precomputed embedding for lyric text {0:?}")]
    MissingEmbedding(String),

    #[error("lyric windows overlap: [{0}, {1}) and [{2}, {3})")]
    OverlappingWindows(f64, f64, f64, f64),

    #[error("non-finite values: {0}")]
    NonFinite(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("checkpoint kind mismatch: expected {expected}, found {found}")]
    KindMismatch { expected: String, found: String },

    #[error("audio: {0}")]
    Audio(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn shape(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape { context, expected: expected.to_string(), actual: actual.to_string() }
    }

    /// True for failures raised by the numerics rather than by bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_) | Error::NonFinite(_))
    }
}

impl From<hound::Error> for Error {
    fn from(e: hound::Error) -> Self {
        Error::Audio(e.to_string())
    }
}
