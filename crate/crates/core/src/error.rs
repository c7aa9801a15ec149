use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("pixel {index} has value {value}, outside 1..={num_categories}{void}")]
    InvalidPixel {
        index: usize,
        value: u32,
        num_categories: usize,
        void: String,
    },

    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("invalid mask: {0}")]
    InvalidMask(String),

    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    Shape {
        context: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("feature subset must select at least one of pc, ap, sd")]
    EmptySubset,

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed file: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("manifest: referenced file does not exist: {0}")]
    MissingFile(PathBuf),

    #[error("manifest: duplicate sample id {0:?}")]
    DuplicateId(String),

    #[error("manifest: sample {id:?} has label {label}, but num_classes is {num_classes}")]
    ManifestLabel {
        id: String,
        label: usize,
        num_classes: usize,
    },

    #[error("split {0:?} has no samples")]
    EmptySplit(String),

    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),

    #[error("invalid synthetic recipe: {0}")]
    Recipe(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn shape(context: impl Into<String>, expected: &[usize], actual: &[usize]) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        }
    }
}
