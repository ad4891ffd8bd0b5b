use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdrpoError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("episode already finished; call reset before stepping again")]
    EpisodeFinished,

    #[error("invalid action {action} for an environment with {n_actions} actions")]
    InvalidAction { action: usize, n_actions: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("unknown environment `{0}` (expected taxi, nchain or cliffwalking)")]
    UnknownEnv(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("operation requires the 0/1 ground distance")]
    UnsupportedDistance,

    #[error("rejection sampler gave up: accepted {accepted} of {proposed} proposals")]
    RejectionRate { accepted: usize, proposed: usize },

    #[error("malformed policy file at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, OdrpoError>;
