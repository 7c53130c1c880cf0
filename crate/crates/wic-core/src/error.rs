//! Error type shared by every module in the crate.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, WicError>;

#[derive(Debug, Error)]
pub enum WicError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed record: {message}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("span out of bounds/inverted{}: {detail}", id.as_deref().map(|i| format!(" in {i}")).unwrap_or_default())]
    InvalidSpan { id: Option<String>, detail: String },

    #[error("duplicate instance id {0:?}")]
    DuplicateId(String),

    #[error("missing label for id {0:?}")]
    MissingLabel(String),

    #[error("label with unknown id {0:?}")]
    UnknownLabelId(String),

    #[error("duplicate label id {0:?}")]
    DuplicateLabelId(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("split ratio {0} is outside (0, 1)")]
    InvalidRatio(f64),

    #[error("vocabulary target size {requested} too small: specials plus alphabet need {needed}")]
    VocabTooSmall { requested: usize, needed: usize },

    #[error(
        "instance {id:?} untokenizable at max_len {max_len}: mandatory tokens alone need {needed}"
    )]
    UntokenizableAtMaxLen {
        id: String,
        needed: usize,
        max_len: usize,
    },

    #[error("sentence contains reserved marker token {0:?}")]
    ReservedMarkerInText(String),

    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    TokenIdOutOfRange { id: u32, vocab_size: usize },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },

    #[error("non-finite loss {loss} at optimizer step {step}")]
    NonFiniteLoss { step: usize, loss: f64 },

    #[error("empty {which} split")]
    EmptySplit { which: &'static str },

    #[error("strategy mismatch: checkpoint has {found}, requested {expected}")]
    StrategyMismatch { expected: String, found: String },

    #[error("unknown strategy name {0:?}")]
    UnknownStrategy(String),

    #[error("bad checkpoint: {0}")]
    CheckpointFormat(String),

    #[error("prediction/gold id sets differ: {0}")]
    IdSetMismatch(String),

    #[error("ensemble input is empty")]
    EmptyEnsemble,

    #[error("accuracy undefined: confusion matrix total is zero")]
    UndefinedMetric,

    #[error("unknown language pair code {0:?}")]
    UnknownLanguagePair(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl WicError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        WicError::Io {
            path: path.into(),
            source,
        }
    }
}
