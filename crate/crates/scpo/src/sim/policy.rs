//! Toy softmax policy over step structure.
//!
//! Two kinds of actions: one step-count choice per response (a categorical
//! over 1..=n_slots, with a separate logit vector for each instance size the
//! environment can produce) and one length-bin choice per emitted step (a
//! categorical per slot index). Log-probability gradients are exact, which
//! keeps the surrogate's finite-difference check honest.

use rand::Rng;

use crate::error::{Error, Result};
use crate::objective::policy_entropy;

/// Parameters of the toy policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    /// Smallest instance size the count head covers.
    pub min_slots: usize,
    /// One logit vector per instance size n in min_slots..=max_slots; the
    /// vector for size n has n entries and entry c encodes count c + 1.
    pub count_logits: Vec<Vec<f64>>,
    /// Per-slot logits over the length bins.
    pub slot_logits: Vec<Vec<f64>>,
    /// Softmax temperature.
    pub temperature: f64,
}

impl PolicyParams {
    /// Starting policy: small Gaussian jitter (so no two logits tie) plus
    /// logit tilts. `long_bias` > 0 leans every length head toward the
    /// longest bin and `count_bias` leans the count heads toward high step
    /// counts (negative values toward low counts). A long-and-shallow start
    /// (positive length tilt, negative count tilt) models the base policy
    /// this training assumes: verbose steps without useful decomposition.
    pub fn init(
        min_slots: usize,
        max_slots: usize,
        bins: usize,
        long_bias: f64,
        count_bias: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if bins < 2 {
            return Err(Error::ConfigError(format!(
                "need at least two length bins, got {bins}"
            )));
        }
        if min_slots < 1 || min_slots > max_slots {
            return Err(Error::ConfigError(format!(
                "invalid slot range [{min_slots}, {max_slots}]"
            )));
        }
        let mut jitter = || {
            // Box-Muller pair, first component, scaled down.
            let u1: f64 = rng.random::<f64>().max(1e-12);
            let u2: f64 = rng.random();
            0.01 * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        };
        let tilt = |bias: f64, i: usize, n: usize| bias * i as f64 / (n - 1).max(1) as f64;
        Ok(Self {
            min_slots,
            count_logits: (min_slots..=max_slots)
                .map(|n| (0..n).map(|c| jitter() + tilt(count_bias, c, n)).collect())
                .collect(),
            slot_logits: (0..max_slots)
                .map(|_| (0..bins).map(|b| jitter() + tilt(long_bias, b, bins)).collect())
                .collect(),
            temperature: 1.0,
        })
    }

    pub fn max_slots(&self) -> usize {
        self.slot_logits.len()
    }

    pub fn bins(&self) -> usize {
        self.slot_logits.first().map_or(0, Vec::len)
    }

    fn count_index(&self, options: usize) -> usize {
        debug_assert!(
            options >= self.min_slots && options < self.min_slots + self.count_logits.len(),
            "instance size {options} outside the policy's range"
        );
        options - self.min_slots
    }

    /// Distribution over step counts 1..=options for an instance with
    /// `options` slots.
    pub fn count_distribution(&self, options: usize) -> Vec<f64> {
        softmax(&self.count_logits[self.count_index(options)], self.temperature)
    }

    /// Distribution over length bins for one slot.
    pub fn length_distribution(&self, slot: usize) -> Vec<f64> {
        softmax(&self.slot_logits[slot], self.temperature)
    }

    /// Log-probability of a recorded action under the current parameters.
    pub fn log_prob(&self, kind: ActionKind, choice: usize) -> f64 {
        let probs = match kind {
            ActionKind::StepCount { options } => self.count_distribution(options),
            ActionKind::StepLength { slot } => self.length_distribution(slot),
        };
        probs[choice].ln()
    }
}

/// Which categorical a recorded action came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionKind {
    /// The step-count choice for an instance with `options` slots.
    StepCount { options: usize },
    /// The length-bin choice for one slot.
    StepLength { slot: usize },
}

/// One recorded action with its behavior-policy log-probability and the
/// sampling-time distribution entropy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionRecord {
    pub kind: ActionKind,
    pub choice: usize,
    pub old_log_prob: f64,
    pub entropy: f64,
}

/// Gradient accumulator shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGrad {
    pub count: Vec<Vec<f64>>,
    pub slots: Vec<Vec<f64>>,
}

impl PolicyGrad {
    pub fn zeros_like(params: &PolicyParams) -> Self {
        Self {
            count: params
                .count_logits
                .iter()
                .map(|row| vec![0.0; row.len()])
                .collect(),
            slots: params
                .slot_logits
                .iter()
                .map(|row| vec![0.0; row.len()])
                .collect(),
        }
    }

    /// Adds `coefficient * d(log pi(choice)) / d(logits)` for one action:
    /// (one_hot - softmax) / temperature over the action's logit slice.
    pub fn accumulate(
        &mut self,
        params: &PolicyParams,
        kind: ActionKind,
        choice: usize,
        coefficient: f64,
    ) {
        if coefficient == 0.0 {
            return;
        }
        let (probs, row) = match kind {
            ActionKind::StepCount { options } => (
                params.count_distribution(options),
                &mut self.count[options - params.min_slots],
            ),
            ActionKind::StepLength { slot } => {
                (params.length_distribution(slot), &mut self.slots[slot])
            }
        };
        for (b, &p) in probs.iter().enumerate() {
            let indicator = if b == choice { 1.0 } else { 0.0 };
            row[b] += coefficient * (indicator - p) / params.temperature;
        }
    }

    /// Gradient-ascent step: params += learning_rate * grad.
    pub fn apply(&self, params: &mut PolicyParams, learning_rate: f64) {
        for (row, grow) in params.count_logits.iter_mut().zip(&self.count) {
            for (logit, g) in row.iter_mut().zip(grow) {
                *logit += learning_rate * g;
            }
        }
        for (row, grow) in params.slot_logits.iter_mut().zip(&self.slots) {
            for (logit, g) in row.iter_mut().zip(grow) {
                *logit += learning_rate * g;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.count
            .iter()
            .flatten()
            .chain(self.slots.iter().flatten())
            .fold(0.0f64, |acc, g| acc.max(g.abs()))
    }
}

/// Samples from a categorical and records the action.
pub fn sample_action(
    params: &PolicyParams,
    kind: ActionKind,
    rng: &mut impl Rng,
) -> ActionRecord {
    let probs = match kind {
        ActionKind::StepCount { options } => params.count_distribution(options),
        ActionKind::StepLength { slot } => params.length_distribution(slot),
    };
    let choice = sample_categorical(&probs, rng);
    ActionRecord {
        kind,
        choice,
        old_log_prob: probs[choice].ln(),
        entropy: policy_entropy(&probs).expect("softmax output is a distribution"),
    }
}

fn softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let peak = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits
        .iter()
        .map(|&z| ((z - peak) / temperature).exp())
        .collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn sample_categorical(probs: &[f64], rng: &mut impl Rng) -> usize {
    let draw: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if draw < acc {
            return i;
        }
    }
    probs.len() - 1
}
