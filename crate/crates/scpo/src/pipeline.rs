//! The step scoring pipeline, in its fixed order: raw importance from
//! oracle ablation, keyword bonus, partitioned min-max normalization,
//! correct-set standardization, step rewards, group reward normalization,
//! discounted step advantages, token broadcast.
//!
//! The same path scores simulator rollouts and recorded trace files; only
//! the `Oracle` backend differs.

use serde::Serialize;

use crate::advantage::{
    broadcast_to_tokens, normalize_rewards_scoped, s_gae, NormScope, ScoreTable,
};
use crate::error::Result;
use crate::importance::{apply_additional_score, effective_mask_from_raw, minmax_normalize, raw_importance};
use crate::oracle::Oracle;
use crate::reward::{standardize_counts_with, standardize_lengths_with, step_reward, GroupStats, RewardConfig};
use crate::trajectory::Group;

/// Scoring knobs shared across entry points.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreConfig {
    pub reward: RewardConfig,
    /// Discount factor for the step advantage.
    pub gamma: f64,
    /// Threshold on normalized importance for the effectiveness diagnostics.
    pub effective_threshold: f64,
    /// Pooling scope for reward normalization.
    pub norm_scope: NormScope,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            reward: RewardConfig::default(),
            gamma: 0.95,
            effective_threshold: 0.01,
            norm_scope: NormScope::Group,
        }
    }
}

/// Pipeline stages, recorded in execution order so tests can assert each
/// normalization runs exactly once per group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PipelineStage {
    RawImportance,
    KeywordBonus,
    ImportanceMinMax,
    CorrectSetStandardize,
    StepRewards,
    RewardNormalize,
    DiscountedAdvantage,
    TokenBroadcast,
}

/// Everything the pipeline derives for one group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupScores {
    pub difficulty: f64,
    /// Raw importance d.
    pub raw_importance: Vec<Vec<f64>>,
    /// Bonus-adjusted importance d~.
    pub importance_with_bonus: Vec<Vec<f64>>,
    /// Min-max normalized importance d'.
    pub normalized_importance: Vec<Vec<f64>>,
    /// Standardized step lengths (correct-set statistics).
    pub standardized_lengths: Vec<Vec<f64>>,
    /// Standardized step counts, one per response.
    pub standardized_counts: Vec<f64>,
    pub table: ScoreTable,
    /// Effectiveness flags from group-scaled raw importance.
    pub effective: Vec<Vec<bool>>,
    pub trace: Vec<PipelineStage>,
}

impl GroupScores {
    /// Fraction of steps marked effective, over the whole group.
    pub fn effective_step_fraction(&self) -> f64 {
        let total: usize = self.effective.iter().map(Vec::len).sum();
        if total == 0 {
            return 0.0;
        }
        let hits: usize = self
            .effective
            .iter()
            .flatten()
            .filter(|&&e| e)
            .count();
        hits as f64 / total as f64
    }
}

/// Scores one group end to end.
pub fn score_group(group: &Group, oracle: &dyn Oracle, config: &ScoreConfig) -> Result<GroupScores> {
    config.reward.validate()?;
    let mut trace = Vec::with_capacity(8);
    let rho = group.difficulty();
    let question_id = group.question.id.as_str();
    let correctness = group.correctness_flags();

    // Raw importance from oracle ablation: p1 per response, p2 per step.
    let mut raw: Vec<Vec<f64>> = Vec::with_capacity(group.size());
    for (i, response) in group.responses.iter().enumerate() {
        let p1 = oracle.p_full(question_id, i)?;
        let mut row = Vec::with_capacity(response.step_count());
        for (j, step) in response.steps.iter().enumerate() {
            let p2 = oracle.p_without(question_id, i, j)?;
            row.push(raw_importance(p1, p2, step.length as f64));
        }
        raw.push(row);
    }
    trace.push(PipelineStage::RawImportance);

    let with_bonus: Vec<Vec<f64>> = group
        .responses
        .iter()
        .zip(&raw)
        .map(|(response, row)| apply_additional_score(row, &response.keyword_flags(), rho))
        .collect::<Result<_>>()?;
    trace.push(PipelineStage::KeywordBonus);

    let normalized_importance = minmax_normalize(&with_bonus, &correctness)?;
    trace.push(PipelineStage::ImportanceMinMax);

    // Correct-set standardization; with no correct response the correct
    // branch is vacuous and zeros are never read.
    let any_correct = correctness.iter().any(|&c| c);
    let (standardized_lengths, standardized_counts) = if any_correct {
        let stats = GroupStats::compute(group, config.reward.floor)?;
        (
            standardize_lengths_with(group, &stats),
            standardize_counts_with(group, &stats),
        )
    } else {
        (
            group
                .responses
                .iter()
                .map(|r| vec![0.0; r.step_count()])
                .collect(),
            vec![0.0; group.size()],
        )
    };
    trace.push(PipelineStage::CorrectSetStandardize);

    let mut rewards: Vec<Vec<f64>> = Vec::with_capacity(group.size());
    for (i, response) in group.responses.iter().enumerate() {
        let mut row = Vec::with_capacity(response.step_count());
        for j in 0..response.step_count() {
            row.push(step_reward(
                response.is_correct,
                standardized_lengths[i][j],
                standardized_counts[i],
                normalized_importance[i][j],
                rho,
                &config.reward,
            )?);
        }
        rewards.push(row);
    }
    trace.push(PipelineStage::StepRewards);

    let normalized = normalize_rewards_scoped(&rewards, &correctness, config.norm_scope)?;
    trace.push(PipelineStage::RewardNormalize);

    let advantages: Vec<Vec<f64>> = normalized
        .iter()
        .map(|row| s_gae(row, config.gamma))
        .collect::<Result<_>>()?;
    trace.push(PipelineStage::DiscountedAdvantage);

    let token_advantages: Vec<Vec<f64>> = advantages
        .iter()
        .zip(&group.responses)
        .map(|(row, response)| broadcast_to_tokens(row, &response.token_counts()))
        .collect::<Result<_>>()?;
    trace.push(PipelineStage::TokenBroadcast);

    // Effectiveness diagnostics: group-pooled min-max scaling of raw
    // importance, no correctness split.
    let flat_raw: Vec<f64> = raw.iter().flatten().copied().collect();
    let flat_mask = effective_mask_from_raw(&flat_raw, config.effective_threshold);
    let mut effective = Vec::with_capacity(group.size());
    let mut cursor = 0usize;
    for row in &raw {
        effective.push(flat_mask[cursor..cursor + row.len()].to_vec());
        cursor += row.len();
    }

    Ok(GroupScores {
        difficulty: rho,
        raw_importance: raw,
        importance_with_bonus: with_bonus,
        normalized_importance,
        standardized_lengths,
        standardized_counts,
        table: ScoreTable {
            rewards,
            normalized,
            advantages,
            token_advantages,
        },
        effective,
        trace,
    })
}

/// The canonical stage order.
pub const EXPECTED_TRACE: [PipelineStage; 8] = [
    PipelineStage::RawImportance,
    PipelineStage::KeywordBonus,
    PipelineStage::ImportanceMinMax,
    PipelineStage::CorrectSetStandardize,
    PipelineStage::StepRewards,
    PipelineStage::RewardNormalize,
    PipelineStage::DiscountedAdvantage,
    PipelineStage::TokenBroadcast,
];
