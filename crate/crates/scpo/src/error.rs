//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by scoring, simulation, and verification operations.
#[derive(Debug, Error)]
pub enum Error {
    /// Input text was empty or contained only whitespace.
    #[error("input text is empty")]
    EmptyInput,
    /// A group-level operation received a group with no responses or no steps.
    #[error("group is empty: {0}")]
    EmptyGroup(&'static str),
    /// A per-response score row was empty.
    #[error("score row is empty")]
    EmptyRow,
    /// A step index was outside its response's step range.
    #[error("step index {step} out of range for response with {step_count} steps")]
    IndexError { step: usize, step_count: usize },
    /// The oracle backing store has no record for the query.
    #[error("no recorded probability for question {question_id:?}, response {response_index}")]
    MissingProbability {
        question_id: String,
        response_index: usize,
    },
    /// A standardization over correct responses found none.
    #[error("group has no correct responses")]
    NoCorrectResponses,
    /// A configuration value violated its documented range.
    #[error("configuration error: {0}")]
    ConfigError(String),
    /// Paired inputs had mismatched lengths.
    #[error("shape mismatch: {0}")]
    ShapeError(String),
    /// A probability vector was not a distribution.
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    /// A step reported zero tokens.
    #[error("step {step} has zero token count")]
    InvalidTokenCount { step: usize },
    /// A linearized length update left the valid regime (update factor <= 0).
    #[error("update factor {factor} is not positive; step size too large for the linear regime")]
    InvalidRegime { factor: f64 },
    /// The warm-up selection rule produced no qualifying responses.
    #[error("no correct response under the length cap; nothing to imitate")]
    NoWarmupData,
    /// A domain value violated a structural invariant.
    #[error("invalid data: {0}")]
    InvalidData(String),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
