//! Clipped surrogate objective with difficulty-adaptive bounds, probability
//! ratios, and the policy-entropy diagnostic.
//!
//! Sign convention, stated once: the objective is a quantity to MAXIMIZE;
//! training loops that hand it to a minimizer negate it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clipping hyperparameters. The base epsilon is shrunk below 1 by up to
/// `delta_low` on easy groups and grown above 1 by up to `delta_high` on
/// hard ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClipConfig {
    /// Base clip width.
    pub epsilon: f64,
    /// How far the lower bound tightens on the easiest groups.
    pub delta_low: f64,
    /// How far the upper bound widens on the hardest groups.
    pub delta_high: f64,
}

impl Default for ClipConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.2,
            delta_low: 0.03,
            delta_high: 0.08,
        }
    }
}

impl ClipConfig {
    pub fn validate(&self) -> Result<()> {
        if self.delta_low.is_nan()
            || self.delta_low < 0.0
            || self.epsilon.is_nan()
            || self.epsilon <= self.delta_low
        {
            return Err(Error::ConfigError(format!(
                "need epsilon > delta_low >= 0, got epsilon = {}, delta_low = {}",
                self.epsilon, self.delta_low
            )));
        }
        if self.delta_high < 0.0 {
            return Err(Error::ConfigError(format!(
                "delta_high = {} must be nonnegative",
                self.delta_high
            )));
        }
        Ok(())
    }
}

/// Difficulty-adaptive clip half-widths:
///
/// eps_low  = epsilon - delta_low  * (1 - rho)
/// eps_high = epsilon + delta_high * rho
///
/// Both grow with difficulty, loosening the ratio interval
/// [1 - eps_low, 1 + eps_high] on hard groups.
pub fn clip_bounds(rho: f64, config: &ClipConfig) -> Result<(f64, f64)> {
    config.validate()?;
    debug_assert!((0.0..=1.0).contains(&rho));
    let eps_low = config.epsilon - config.delta_low * (1.0 - rho);
    let eps_high = config.epsilon + config.delta_high * rho;
    Ok((eps_low, eps_high))
}

/// Probability ratio exp(new - old); exactly 1 for equal log-probabilities.
pub fn ratio(new_log_prob: f64, old_log_prob: f64) -> f64 {
    if new_log_prob == old_log_prob {
        1.0
    } else {
        (new_log_prob - old_log_prob).exp()
    }
}

/// Inputs for one surrogate evaluation: per-action log-probabilities under
/// the current and behavior policies, per-action advantages, and the clip
/// half-widths resolved for the group.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateInput {
    pub new_log_probs: Vec<f64>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub eps_low: f64,
    pub eps_high: f64,
}

impl SurrogateInput {
    fn validate(&self) -> Result<()> {
        if self.new_log_probs.len() != self.old_log_probs.len()
            || self.new_log_probs.len() != self.advantages.len()
        {
            return Err(Error::ShapeError(format!(
                "{} new log-probs, {} old log-probs, {} advantages",
                self.new_log_probs.len(),
                self.old_log_probs.len(),
                self.advantages.len()
            )));
        }
        Ok(())
    }
}

/// One action's contribution to the surrogate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionTerm {
    /// min(r * A, clip(r) * A).
    pub value: f64,
    /// d(value)/d(new_log_prob): A * r when the unclipped branch is active,
    /// 0 when the clipped branch is strictly smaller.
    pub grad_coefficient: f64,
    /// Whether the clipped branch was strictly smaller.
    pub clipped: bool,
}

/// Per-action surrogate terms; `clipped_surrogate` is their mean.
pub fn surrogate_action_terms(input: &SurrogateInput) -> Result<Vec<ActionTerm>> {
    input.validate()?;
    let lo = 1.0 - input.eps_low;
    let hi = 1.0 + input.eps_high;
    Ok(input
        .new_log_probs
        .iter()
        .zip(&input.old_log_probs)
        .zip(&input.advantages)
        .map(|((&new_lp, &old_lp), &adv)| {
            let r = ratio(new_lp, old_lp);
            let unclipped = r * adv;
            let clipped_value = r.clamp(lo, hi) * adv;
            let clipped = clipped_value < unclipped;
            ActionTerm {
                value: unclipped.min(clipped_value),
                grad_coefficient: if clipped { 0.0 } else { adv * r },
                clipped,
            }
        })
        .collect())
}

/// Mean clipped surrogate over the actions, plus the fraction of actions
/// where the clipped branch was strictly smaller. Empty input yields (0, 0).
pub fn clipped_surrogate(input: &SurrogateInput) -> Result<(f64, f64)> {
    let terms = surrogate_action_terms(input)?;
    if terms.is_empty() {
        return Ok((0.0, 0.0));
    }
    let n = terms.len() as f64;
    let objective = terms.iter().map(|t| t.value).sum::<f64>() / n;
    let clipped_fraction = terms.iter().filter(|t| t.clipped).count() as f64 / n;
    Ok((objective, clipped_fraction))
}

/// Shannon entropy -sum p ln p of an action distribution, with 0 ln 0 = 0.
/// Maximal at the uniform distribution.
pub fn policy_entropy(action_distribution: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for &p in action_distribution {
        if p < 0.0 {
            return Err(Error::InvalidDistribution(format!(
                "negative probability {p}"
            )));
        }
        total += p;
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidDistribution(format!(
            "probabilities sum to {total}"
        )));
    }
    Ok(action_distribution
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum())
}
