//! Step-level length-control reward: group standardization of step lengths
//! and step counts over correct responses, the logistic squash, and the
//! two-branch reward.
//!
//! Correct responses pay a penalty that grows with standardized step length
//! and step count, softened for important steps (k1 = k0 * (1 - d')) and
//! for hard questions (k2 = k0 * (1 - rho)). Incorrect responses pay no
//! length penalty at all; their reward -exp(-rho * d' / k0) approaches -1
//! fastest on easy questions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{mean, population_std};
use crate::trajectory::Group;
use crate::NUMERICAL_FLOOR;

/// Reward hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    /// Base penalty coefficient k0, strictly inside (0, 1) so that
    /// correct-branch factors 1 - k * sigma stay positive.
    pub k0: f64,
    /// Standard deviations below this floor take the degenerate path.
    pub floor: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            k0: 0.6,
            floor: NUMERICAL_FLOOR,
        }
    }
}

impl RewardConfig {
    pub fn new(k0: f64) -> Result<Self> {
        let config = Self {
            k0,
            ..Self::default()
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k0.is_nan() || self.k0 <= 0.0 || self.k0 >= 1.0 {
            return Err(Error::ConfigError(format!(
                "k0 = {} outside (0, 1)",
                self.k0
            )));
        }
        if self.floor.is_nan() || self.floor <= 0.0 {
            return Err(Error::ConfigError(format!(
                "numerical floor {} must be positive",
                self.floor
            )));
        }
        Ok(())
    }
}

/// Logistic squash sigma(x) = 1 / (1 + e^-x), strictly increasing with
/// range (0, 1).
pub fn squash(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Group statistics over the correct-answer set: step lengths pool every
/// step of every correct response; step counts pool one count per correct
/// response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupStats {
    pub mean_step_length: f64,
    pub std_step_length: f64,
    pub mean_step_count: f64,
    pub std_step_count: f64,
    pub degenerate_length: bool,
    pub degenerate_count: bool,
}

impl GroupStats {
    /// Computes the correct-set statistics; errors when the group has no
    /// correct response (the correct branch is then vacuous).
    pub fn compute(group: &Group, floor: f64) -> Result<Self> {
        let lengths: Vec<f64> = group
            .responses
            .iter()
            .filter(|r| r.is_correct)
            .flat_map(|r| r.steps.iter().map(|s| s.length as f64))
            .collect();
        if lengths.is_empty() {
            return Err(Error::NoCorrectResponses);
        }
        let counts: Vec<f64> = group
            .responses
            .iter()
            .filter(|r| r.is_correct)
            .map(|r| r.step_count() as f64)
            .collect();
        let std_step_length = population_std(&lengths);
        let std_step_count = population_std(&counts);
        Ok(Self {
            mean_step_length: mean(&lengths),
            std_step_length,
            mean_step_count: mean(&counts),
            std_step_count,
            degenerate_length: std_step_length < floor,
            degenerate_count: std_step_count < floor,
        })
    }

    fn standardize_length(&self, length: f64) -> f64 {
        if self.degenerate_length {
            0.0
        } else {
            (length - self.mean_step_length) / self.std_step_length
        }
    }

    fn standardize_count(&self, count: f64) -> f64 {
        if self.degenerate_count {
            0.0
        } else {
            (count - self.mean_step_count) / self.std_step_count
        }
    }
}

/// Standardized step lengths for every response in the group, using the
/// correct-set statistics. Entries for incorrect responses are computed with
/// the same statistics but are never consumed by the reward (the incorrect
/// branch carries no length term).
pub fn standardize_lengths(group: &Group, floor: f64) -> Result<Vec<Vec<f64>>> {
    let stats = GroupStats::compute(group, floor)?;
    Ok(standardize_lengths_with(group, &stats))
}

/// As `standardize_lengths`, reusing precomputed statistics.
pub fn standardize_lengths_with(group: &Group, stats: &GroupStats) -> Vec<Vec<f64>> {
    group
        .responses
        .iter()
        .map(|r| {
            r.steps
                .iter()
                .map(|s| stats.standardize_length(s.length as f64))
                .collect()
        })
        .collect()
}

/// Standardized step counts, one per response, from the correct-set
/// statistics.
pub fn standardize_counts(group: &Group, floor: f64) -> Result<Vec<f64>> {
    let stats = GroupStats::compute(group, floor)?;
    Ok(standardize_counts_with(group, &stats))
}

/// As `standardize_counts`, reusing precomputed statistics.
pub fn standardize_counts_with(group: &Group, stats: &GroupStats) -> Vec<f64> {
    group
        .responses
        .iter()
        .map(|r| stats.standardize_count(r.step_count() as f64))
        .collect()
}

/// Reward for one step.
///
/// Correct branch: (1 - k1 * sigma(l_tilde)) * (1 - k2 * sigma(n_tilde))
/// with k1 = k0 * (1 - d_prime) and k2 = k0 * (1 - rho); range
/// ((1 - k0)^2, 1].
///
/// Incorrect branch: -exp(-rho * d_prime / k0); range [-1, 0), independent
/// of the standardized length terms.
pub fn step_reward(
    is_correct: bool,
    l_tilde: f64,
    n_tilde: f64,
    d_prime: f64,
    rho: f64,
    config: &RewardConfig,
) -> Result<f64> {
    config.validate()?;
    debug_assert!((0.0..=1.0).contains(&d_prime));
    debug_assert!((0.0..=1.0).contains(&rho));
    if is_correct {
        let k1 = config.k0 * (1.0 - d_prime);
        let k2 = config.k0 * (1.0 - rho);
        Ok((1.0 - k1 * squash(l_tilde)) * (1.0 - k2 * squash(n_tilde)))
    } else {
        Ok(-(-rho * d_prime / config.k0).exp())
    }
}
