//! Probability oracle: P(correct answer | question, trajectory) with and
//! without a given step — the two probabilities that drive step importance.
//!
//! The oracle is a trait with two backends behind the same scoring code
//! path: a synthetic analytic law for simulation, and an in-memory table
//! (loaded once from a trace file) for recorded-model analysis. Calling a
//! live model is out of scope.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Identifies a full or step-ablated trajectory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleQuery {
    pub question_id: String,
    pub response_index: usize,
    /// `None` queries the complete trajectory.
    pub removed_step_index: Option<usize>,
}

/// A probability in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleResult {
    pub probability: f64,
}

/// Supplies answer probabilities for full and step-ablated trajectories.
///
/// Implementations are read-only after construction and safe to query
/// concurrently.
pub trait Oracle: Sync {
    /// P(gold answer | question, complete trajectory of response i).
    fn p_full(&self, question_id: &str, response_index: usize) -> Result<f64>;

    /// P(gold answer | question, trajectory of response i with step j removed).
    fn p_without(&self, question_id: &str, response_index: usize, step_index: usize)
        -> Result<f64>;

    fn query(&self, query: &OracleQuery) -> Result<OracleResult> {
        let probability = match query.removed_step_index {
            None => self.p_full(&query.question_id, query.response_index)?,
            Some(j) => self.p_without(&query.question_id, query.response_index, j)?,
        };
        Ok(OracleResult { probability })
    }
}

/// One step as the synthetic law sees it: its latent contribution density
/// and its realized length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticEnvStep {
    /// Latent contribution density w_j >= 0.
    pub density: f64,
    /// Realized step length, >= 1.
    pub length: f64,
}

/// Analytic answer-probability law.
///
/// p = 1 - (1 - p0) * exp(-beta * sum_j w_j * l_j / (l_j + s))
///
/// Saturating in each step's length (extra tokens have diminishing returns)
/// and separable per step, so removing a step simply drops its term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticOracle {
    /// Base success rate p0 with no contributing steps.
    pub base_rate: f64,
    /// Steepness beta > 0.
    pub steepness: f64,
    /// Saturation scale s > 0.
    pub saturation: f64,
}

impl SyntheticOracle {
    pub fn new(base_rate: f64, steepness: f64, saturation: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&base_rate) {
            return Err(Error::ConfigError(format!(
                "base rate {base_rate} outside [0, 1)"
            )));
        }
        if steepness <= 0.0 || !steepness.is_finite() {
            return Err(Error::ConfigError(format!(
                "steepness {steepness} must be positive"
            )));
        }
        if saturation <= 0.0 || !saturation.is_finite() {
            return Err(Error::ConfigError(format!(
                "saturation {saturation} must be positive"
            )));
        }
        Ok(Self {
            base_rate,
            steepness,
            saturation,
        })
    }

    fn step_mass(&self, step: &SyntheticEnvStep) -> f64 {
        step.density * step.length / (step.length + self.saturation)
    }

    fn probability_from_mass(&self, mass: f64) -> f64 {
        1.0 - (1.0 - self.base_rate) * (-self.steepness * mass).exp()
    }

    /// Answer probability for the complete trajectory.
    pub fn answer_probability(&self, steps: &[SyntheticEnvStep]) -> f64 {
        let mass: f64 = steps.iter().map(|s| self.step_mass(s)).sum();
        self.probability_from_mass(mass)
    }

    /// Answer probability with step `removed` dropped from the sum.
    pub fn answer_probability_without(
        &self,
        steps: &[SyntheticEnvStep],
        removed: usize,
    ) -> Result<f64> {
        if removed >= steps.len() {
            return Err(Error::IndexError {
                step: removed,
                step_count: steps.len(),
            });
        }
        let mass: f64 = steps
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != removed)
            .map(|(_, s)| self.step_mass(s))
            .sum();
        Ok(self.probability_from_mass(mass))
    }
}

/// Per-response recorded probabilities: p_full plus one p_without per step.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseProbabilities {
    pub p_full: f64,
    pub p_without: Vec<f64>,
}

impl ResponseProbabilities {
    pub fn new(p_full: f64, p_without: Vec<f64>) -> Result<Self> {
        for &p in std::iter::once(&p_full).chain(&p_without) {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidData(format!("probability {p} outside [0, 1]")));
            }
        }
        Ok(Self { p_full, p_without })
    }
}

/// Table-backed oracle; the trace backend loads its file into one of these
/// up front, and the simulator fills one per rollout group.
#[derive(Debug, Clone, Default)]
pub struct InMemoryOracle {
    by_question: HashMap<String, Vec<ResponseProbabilities>>,
}

impl InMemoryOracle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_group(&mut self, question_id: impl Into<String>, probs: Vec<ResponseProbabilities>) {
        self.by_question.insert(question_id.into(), probs);
    }

    pub fn single_group(question_id: impl Into<String>, probs: Vec<ResponseProbabilities>) -> Self {
        let mut oracle = Self::new();
        oracle.insert_group(question_id, probs);
        oracle
    }

    fn response(&self, question_id: &str, response_index: usize) -> Result<&ResponseProbabilities> {
        self.by_question
            .get(question_id)
            .and_then(|rs| rs.get(response_index))
            .ok_or_else(|| Error::MissingProbability {
                question_id: question_id.to_string(),
                response_index,
            })
    }
}

impl Oracle for InMemoryOracle {
    fn p_full(&self, question_id: &str, response_index: usize) -> Result<f64> {
        Ok(self.response(question_id, response_index)?.p_full)
    }

    fn p_without(
        &self,
        question_id: &str,
        response_index: usize,
        step_index: usize,
    ) -> Result<f64> {
        let record = self.response(question_id, response_index)?;
        record
            .p_without
            .get(step_index)
            .copied()
            .ok_or(Error::IndexError {
                step: step_index,
                step_count: record.p_without.len(),
            })
    }
}
