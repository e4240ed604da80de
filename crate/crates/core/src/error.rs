use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: malformed JSON: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("document {doc_id}: {reason}")]
    InvalidDocument { doc_id: String, reason: String },

    #[error("corpus too small to split: {0} documents (need at least 5)")]
    CorpusTooSmall(usize),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("position {index} out of bounds for sequence of length {len}")]
    IndexOutOfBounds { index: usize, len: usize },

    #[error("span ({start}, {end}) outside text of length {len}")]
    SpanOutsideText {
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("prediction for unknown document {0}")]
    UnknownDocument(String),

    #[error("no prediction for document {0}")]
    MissingPrediction(String),

    #[error("unsupported model version {found} (expected {expected})")]
    ModelVersion { found: String, expected: u32 },

    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    #[error("non-finite objective {objective} (weight norm {weight_norm}, sequence {sequence})")]
    NonFinite {
        objective: f64,
        weight_norm: f64,
        sequence: String,
    },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("empty feature space: no attributes observed in training data")]
    EmptyFeatureSpace,

    #[error("empty training set")]
    EmptyTrainingSet,

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(doc_id: &str, reason: impl Into<String>) -> Self {
        Error::InvalidDocument {
            doc_id: doc_id.to_string(),
            reason: reason.into(),
        }
    }

    /// Errors caused by the inputs rather than by a bug or the environment.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::NonFinite { .. } | Error::Diverged(_))
    }
}
