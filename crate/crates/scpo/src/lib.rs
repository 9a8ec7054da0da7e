//! Step-level length control for chain-of-thought policy optimization.
//!
//! The library scores each reasoning step of a sampled response by how much
//! it contributes to reaching the correct answer, converts those scores into
//! length-control rewards and discounted step advantages, and optimizes a
//! clipped surrogate objective with difficulty-adaptive bounds. A toy
//! simulator trains a softmax policy over step counts and per-step length
//! bins end to end, and a budget-matched check verifies that step-level
//! penalties preserve more answer contribution than a uniform global
//! penalty.
//!
//! Heavy inner loops (verification trials, batch rollouts) run on rayon
//! when the default `parallel` feature is enabled and fall back to plain
//! iterators without it; results are identical in both modes because every
//! work item draws from its own seeded substream.

pub mod advantage;
pub mod cli;
pub mod error;
pub mod exec;
pub mod importance;
pub mod objective;
pub mod oracle;
pub mod pipeline;
pub mod reward;
pub mod seeding;
pub mod sim;
pub mod stats;
pub mod theory;
pub mod trajectory;

pub use error::{Error, Result};

/// Denominators (variances, spreads, squared probabilities) below this floor
/// take the documented degenerate path instead of being divided by.
pub const NUMERICAL_FLOOR: f64 = 1e-12;
