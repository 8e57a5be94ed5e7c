use std::path::PathBuf;

use crate::Label;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed WAV header: {0}")]
    MalformedHeader(String),

    #[error("unsupported WAV encoding: {0}")]
    UnsupportedEncoding(String),

    #[error("WAV data chunk is empty")]
    EmptyPayload,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("class {0} has no usable speakers")]
    EmptyClass(Label),

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("inconsistent predictions: {0}")]
    InconsistentPredictions(String),

    #[error("feature cache: {0}")]
    CacheFormat(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("config: {0}")]
    Config(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// Short machine-parseable category, used for CLI exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::MalformedHeader(_) | Error::UnsupportedEncoding(_) | Error::EmptyPayload => "wav",
            Error::InvalidArgument(_) => "argument",
            Error::ShapeMismatch { .. } => "shape",
            Error::EmptyClass(_) | Error::EmptyTrainingSet => "data",
            Error::NonFiniteLoss { .. } => "training",
            Error::InconsistentPredictions(_) => "predictions",
            Error::CacheFormat(_) => "cache",
            Error::ModelFormat(_) => "model",
            Error::Manifest(_) => "manifest",
            Error::Config(_) => "config",
            Error::Csv(_) => "csv",
        }
    }
}
