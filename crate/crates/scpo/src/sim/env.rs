//! Synthetic reasoning environment.
//!
//! A question instance is a row of slots. Each slot carries a latent
//! contribution density; the analytic oracle turns emitted step lengths and
//! densities into an answer probability. Expected density decays with slot
//! index under Pareto noise, so early steps carry most of the contribution
//! and trailing slots are mostly redundant — structure a step-level
//! controller can exploit per slot and a global penalty cannot.
//!
//! Reflection slots (the ones whose steps carry transition keywords) are
//! boosted on hard instances and damped on easy ones: reflecting pays off
//! exactly where difficulty is high.

use rand::Rng;
use rand_distr::{Distribution, Pareto};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Latent-density sampler parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityParams {
    /// Pareto tail shape; smaller is heavier-tailed.
    pub tail_shape: f64,
    /// Exponential decay rate of the expected density beyond the
    /// instance's plateau.
    pub index_decay: f64,
    /// Multiplier applied to reflection-slot densities on hard instances
    /// (and divided out on easy ones).
    pub reflection_boost: f64,
}

impl Default for DensityParams {
    fn default() -> Self {
        Self {
            tail_shape: 2.5,
            index_decay: 1.8,
            reflection_boost: 6.0,
        }
    }
}

/// Environment specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSpec {
    /// Inclusive slot-count range per instance.
    pub min_slots: usize,
    pub max_slots: usize,
    pub density: DensityParams,
    /// Saturation scale of the oracle's length response.
    pub saturation: f64,
    /// Oracle steepness.
    pub steepness: f64,
    /// Base answer rate with no contributing steps.
    pub base_rate: f64,
    /// Probability that a slot is a reflection slot.
    pub keyword_slot_prob: f64,
    /// Extra salt mixed into the correctness-draw substream.
    pub answer_noise_salt: u64,
    /// Discrete lengths the policy can pick per step.
    pub length_bins: Vec<u64>,
}

impl Default for EnvSpec {
    fn default() -> Self {
        Self {
            min_slots: 4,
            max_slots: 12,
            density: DensityParams::default(),
            saturation: 16.0,
            steepness: 3.0,
            base_rate: 0.05,
            keyword_slot_prob: 0.25,
            answer_noise_salt: 0,
            length_bins: vec![6, 10, 16, 26, 42],
        }
    }
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        if self.min_slots < 1 || self.min_slots > self.max_slots {
            return Err(Error::ConfigError(format!(
                "slot range [{}, {}] invalid",
                self.min_slots, self.max_slots
            )));
        }
        if self.saturation.is_nan() || self.saturation <= 0.0 {
            return Err(Error::ConfigError("saturation must be positive".into()));
        }
        if self.steepness.is_nan() || self.steepness <= 0.0 {
            return Err(Error::ConfigError("steepness must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.base_rate) {
            return Err(Error::ConfigError("base rate must lie in [0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.keyword_slot_prob) {
            return Err(Error::ConfigError(
                "keyword slot probability must lie in [0, 1]".into(),
            ));
        }
        if self.length_bins.len() < 2 || self.length_bins.contains(&0) {
            return Err(Error::ConfigError(
                "need at least two positive length bins".into(),
            ));
        }
        let d = &self.density;
        if d.tail_shape.is_nan()
            || d.tail_shape <= 0.0
            || d.reflection_boost.is_nan()
            || d.reflection_boost < 1.0
            || d.index_decay.is_nan()
            || d.index_decay < 0.0
        {
            return Err(Error::ConfigError("invalid density parameters".into()));
        }
        Ok(())
    }
}

/// One slot of a sampled instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slot {
    /// Normalized latent density; the instance's slots sum to 1.
    pub density: f64,
    /// Whether steps emitted in this slot carry a transition keyword.
    pub has_keyword: bool,
}

/// A sampled question instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: String,
    pub slots: Vec<Slot>,
    /// Slot count strictly above the range midpoint.
    pub hard: bool,
}

impl Instance {
    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }
}

/// Draws an instance: slot count, keyword flags, and normalized densities.
/// Deterministic for a fixed RNG state.
pub fn sample_instance(spec: &EnvSpec, id: impl Into<String>, rng: &mut impl Rng) -> Instance {
    let n_slots = rng.random_range(spec.min_slots..=spec.max_slots);
    let hard = 2 * n_slots > spec.min_slots + spec.max_slots;
    let pareto = Pareto::new(1.0, spec.density.tail_shape).expect("validated tail shape");
    let mut raw = Vec::with_capacity(n_slots);
    let mut keywords = Vec::with_capacity(n_slots);
    // Larger instances spread contribution deeper: the decay relaxes with
    // slot count, so big questions need long trajectories while small ones
    // stay front-loaded.
    let decay = spec.density.index_decay * spec.min_slots as f64 / n_slots as f64;
    for j in 0..n_slots {
        let has_keyword = rng.random::<f64>() < spec.keyword_slot_prob;
        let mut profile = (-decay * j as f64).exp();
        if has_keyword {
            if hard {
                profile *= spec.density.reflection_boost;
            } else {
                profile /= spec.density.reflection_boost;
            }
        }
        let noise: f64 = pareto.sample(rng);
        raw.push(profile * noise);
        keywords.push(has_keyword);
    }
    let total: f64 = raw.iter().sum();
    let slots = raw
        .into_iter()
        .zip(keywords)
        .map(|(w, has_keyword)| Slot {
            density: w / total,
            has_keyword,
        })
        .collect();
    Instance {
        id: id.into(),
        slots,
        hard,
    }
}
