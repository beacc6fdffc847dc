use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vocabulary must contain at least 2 tokens, got {0}")]
    VocabTooSmall(usize),

    #[error("horizon must be at least 1")]
    ZeroHorizon,

    #[error("order {order} exceeds horizon - 1 = {max}")]
    OrderTooLarge { order: usize, max: usize },

    #[error("invalid prompt set: {0}")]
    InvalidPromptSet(String),

    #[error("prompt id {id} out of range for {count} prompts")]
    PromptOutOfRange { id: usize, count: usize },

    #[error("token {token} out of vocabulary range 0..{vocab}")]
    TokenOutOfRange { token: u32, vocab: usize },

    #[error("trajectory has {got} tokens but the policy horizon is {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("stored teacher log-prob {value} at position {position} is positive")]
    PositiveLogProb { position: usize, value: f64 },

    #[error("incompatible policies: {0}")]
    Incompatible(String),

    #[error("enumeration of {sequences} sequences (V^T = {vocab}^{horizon}) exceeds the cap of {cap}")]
    EnumerationCap {
        vocab: usize,
        horizon: usize,
        sequences: u128,
        cap: u64,
    },

    #[error("no teacher policy and no stored teacher log-probs available")]
    MissingTeacher,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("non-finite gradient at step {step}")]
    NonFiniteGradient { step: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
