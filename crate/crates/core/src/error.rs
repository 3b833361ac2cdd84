use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate mask: every entry of row {row} is masked")]
    DegenerateMask { row: usize },

    #[error("zero-norm embedding")]
    ZeroNorm,

    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value in {what}")]
    NonFinite { what: String },

    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("stratification requires instance labels (bag {bag_id})")]
    MissingInstanceLabels { bag_id: u64 },

    #[error("class {class} has {count} bags, fewer than {folds} folds")]
    ClassTooSmall {
        class: u8,
        count: usize,
        folds: usize,
    },

    #[error("embedding is not unit norm (norm = {norm})")]
    NotUnitNorm { norm: f64 },

    #[error("empty bag")]
    EmptyBag,

    #[error("leakage: instance {provenance} is outside the training split but reached a pseudo-bag of bag {bag_id}")]
    Leakage { provenance: String, bag_id: u64 },

    #[error("fold {fold} failed: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    IoBare(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
