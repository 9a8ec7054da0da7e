//! End-to-end toy training: group rollouts, the step-level update, the
//! global length-penalty baseline, warm-up imitation, and the experiment
//! driver.
//!
//! Old log-probabilities are recorded at sampling time and held fixed across
//! the batch's reuse updates, PPO-style; only the current policy's
//! log-probabilities move.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::advantage::{broadcast_to_tokens, outcome_advantage, NormScope};
use crate::error::{Error, Result};
use crate::exec::map_indexed;
use crate::objective::{clip_bounds, surrogate_action_terms, ClipConfig, SurrogateInput};
use crate::oracle::{InMemoryOracle, ResponseProbabilities, SyntheticEnvStep, SyntheticOracle};
use crate::pipeline::{score_group, GroupScores, ScoreConfig};
use crate::reward::RewardConfig;
use crate::seeding::stream_rng;
use crate::sim::env::{sample_instance, EnvSpec, Instance};
use crate::sim::metrics::{IterationMetrics, RunMetrics};
use crate::sim::policy::{sample_action, ActionKind, ActionRecord, PolicyGrad, PolicyParams};
use crate::trajectory::{default_keywords, select_shortest_correct, Group, Question, Response, Step};

/// Which update rule drives a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Step-level length control.
    Scpo,
    /// Global length penalty with outcome-level advantages.
    Global,
    /// No updates; Monte-Carlo baseline of the initial policy.
    None,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Scpo => "scpo",
            Method::Global => "global",
            Method::None => "none",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scpo" => Ok(Method::Scpo),
            "global" => Ok(Method::Global),
            "none" => Ok(Method::None),
            other => Err(Error::ConfigError(format!("unknown method {other:?}"))),
        }
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Rollouts per question, G.
    pub group_size: usize,
    /// Questions rolled out per iteration.
    pub questions_per_batch: usize,
    /// Training iterations (batches).
    pub iterations: usize,
    /// Policy updates per batch on fixed old log-probabilities.
    pub updates_per_batch: usize,
    pub learning_rate: f64,
    /// Step-advantage discount factor.
    pub gamma: f64,
    pub reward: RewardConfig,
    pub clip: ClipConfig,
    /// Length-penalty weight of the global baseline.
    pub global_lambda: f64,
    /// Fixed length scale the global baseline's penalty is measured
    /// against (a token budget, not a group statistic, so the penalty does
    /// not ratchet as responses shrink).
    pub global_length_scale: f64,
    /// Effectiveness threshold on normalized importance.
    pub effective_threshold: f64,
    /// Difficulty at or below which a group counts as low-difficulty.
    pub difficulty_split: f64,
    /// Reward-normalization pooling scope.
    pub norm_scope: NormScope,
    /// Initial logit tilt toward long length bins; with a negative
    /// `init_count_bias` this models the long-and-shallow base policy the
    /// training starts from.
    pub init_long_bias: f64,
    /// Initial logit tilt toward high step counts (negative: few steps).
    pub init_count_bias: f64,
    /// Master seed; every substream derives from it.
    pub seed: u64,
    /// Reasoning-transition keywords (used by trace ingestion; simulator
    /// slots carry their flags directly).
    pub keywords: Vec<String>,
    /// Warm-up imitation rounds before the RL loop; each round rolls out
    /// one batch with the current policy and takes one ascent step on the
    /// shortest correct responses. 0 disables warm-up.
    pub warmup_rounds: usize,
    /// Length cap for warm-up selection.
    pub warmup_cap: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            group_size: 8,
            questions_per_batch: 4,
            iterations: 500,
            updates_per_batch: 4,
            learning_rate: 0.4,
            gamma: 0.95,
            reward: RewardConfig::default(),
            clip: ClipConfig::default(),
            global_lambda: 0.4,
            global_length_scale: 100.0,
            effective_threshold: 0.01,
            difficulty_split: 0.5,
            norm_scope: NormScope::Group,
            init_long_bias: 2.0,
            init_count_bias: 2.0,
            seed: 17,
            keywords: default_keywords(),
            warmup_rounds: 20,
            warmup_cap: 4096,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.group_size < 1 {
            return Err(Error::ConfigError("group size must be >= 1".into()));
        }
        if self.questions_per_batch < 1 {
            return Err(Error::ConfigError("questions per batch must be >= 1".into()));
        }
        if self.updates_per_batch < 1 {
            return Err(Error::ConfigError("updates per batch must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::ConfigError(format!(
                "gamma {} outside [0, 1]",
                self.gamma
            )));
        }
        if !(0.0..=1.0).contains(&self.difficulty_split) {
            return Err(Error::ConfigError("difficulty split outside [0, 1]".into()));
        }
        if self.global_lambda.is_nan()
            || self.global_lambda < 0.0
            || self.learning_rate.is_nan()
            || self.learning_rate < 0.0
        {
            return Err(Error::ConfigError(
                "global lambda and learning rate must be nonnegative".into(),
            ));
        }
        if self.global_length_scale.is_nan() || self.global_length_scale <= 0.0 {
            return Err(Error::ConfigError(
                "global length scale must be positive".into(),
            ));
        }
        if self.effective_threshold.is_nan() || self.effective_threshold < 0.0 {
            return Err(Error::ConfigError("effective threshold must be >= 0".into()));
        }
        self.reward.validate()?;
        self.clip.validate()?;
        Ok(())
    }

    pub fn score_config(&self) -> ScoreConfig {
        ScoreConfig {
            reward: self.reward,
            gamma: self.gamma,
            effective_threshold: self.effective_threshold,
            norm_scope: self.norm_scope,
        }
    }
}

/// One group's rollouts with everything the updates need: the trajectory
/// group, the instance it came from, per-response action records, and the
/// oracle probabilities computed at rollout time.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupRollout {
    pub group: Group,
    pub instance: Instance,
    /// Per response: the step-count action followed by one length action per
    /// emitted step.
    pub actions: Vec<Vec<ActionRecord>>,
    pub probs: Vec<ResponseProbabilities>,
}

impl GroupRollout {
    pub fn oracle(&self) -> InMemoryOracle {
        InMemoryOracle::single_group(self.instance.id.clone(), self.probs.clone())
    }

    /// Mean sampling-time entropy over the group's recorded actions.
    pub fn mean_action_entropy(&self) -> f64 {
        let mut total = 0.0;
        let mut count = 0usize;
        for response in &self.actions {
            for action in response {
                total += action.entropy;
                count += 1;
            }
        }
        total / count.max(1) as f64
    }
}

/// Mean decision-head entropy of the policy on one instance: the step-count
/// head for the instance's size plus one length head per slot. This is the
/// policy's uncertainty about how to treat the question, independent of
/// which trajectories the rollouts happened to sample.
pub fn instance_policy_entropy(policy: &PolicyParams, instance: &Instance) -> f64 {
    let n = instance.slot_count();
    let mut total = crate::objective::policy_entropy(&policy.count_distribution(n))
        .expect("softmax output is a distribution");
    for slot in 0..n {
        total += crate::objective::policy_entropy(&policy.length_distribution(slot))
            .expect("softmax output is a distribution");
    }
    total / (n + 1) as f64
}

/// Samples G responses for one instance. Correctness is drawn from the
/// oracle's full-trajectory probability with a dedicated answer stream, so
/// difficulty varies across groups.
pub fn rollout_group(
    policy: &PolicyParams,
    instance: &Instance,
    group_size: usize,
    length_bins: &[u64],
    law: &SyntheticOracle,
    sample_rng: &mut impl Rng,
    answer_rng: &mut impl Rng,
) -> Result<GroupRollout> {
    if group_size < 1 {
        return Err(Error::ConfigError("group size must be >= 1".into()));
    }
    if length_bins.len() != policy.bins() {
        return Err(Error::ShapeError(format!(
            "{} length bins vs {} policy bins",
            length_bins.len(),
            policy.bins()
        )));
    }
    let n_slots = instance.slot_count();
    let question = Question::new(instance.id.clone(), "", "1")?;
    let mut responses = Vec::with_capacity(group_size);
    let mut actions = Vec::with_capacity(group_size);
    let mut probs = Vec::with_capacity(group_size);
    for _ in 0..group_size {
        let count_action = sample_action(
            policy,
            ActionKind::StepCount { options: n_slots },
            sample_rng,
        );
        let step_count = count_action.choice + 1;
        let mut response_actions = vec![count_action];
        let mut steps = Vec::with_capacity(step_count);
        let mut env_steps = Vec::with_capacity(step_count);
        for slot in 0..step_count {
            let length_action = sample_action(policy, ActionKind::StepLength { slot }, sample_rng);
            let length = length_bins[length_action.choice];
            response_actions.push(length_action);
            steps.push(Step::new(
                slot,
                length,
                length,
                instance.slots[slot].has_keyword,
            )?);
            env_steps.push(SyntheticEnvStep {
                density: instance.slots[slot].density,
                length: length as f64,
            });
        }
        let p_full = law.answer_probability(&env_steps);
        let p_without: Vec<f64> = (0..step_count)
            .map(|j| law.answer_probability_without(&env_steps, j))
            .collect::<Result<_>>()?;
        let is_correct = answer_rng.random::<f64>() < p_full;
        responses.push(Response::new(
            steps,
            if is_correct { "1" } else { "0" },
            is_correct,
        )?);
        actions.push(response_actions);
        probs.push(ResponseProbabilities::new(p_full, p_without)?);
    }
    Ok(GroupRollout {
        group: Group::new(question, responses)?,
        instance: instance.clone(),
        actions,
        probs,
    })
}

/// One action prepared for the surrogate: where it came from, its behavior
/// log-probability, and its advantage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreparedAction {
    pub kind: ActionKind,
    pub choice: usize,
    pub old_log_prob: f64,
    pub advantage: f64,
}

/// A scored group ready for any number of reuse updates.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedGroup {
    pub actions: Vec<PreparedAction>,
    pub eps_low: f64,
    pub eps_high: f64,
}

/// Builds the step-level update input: each length action carries its
/// step's discounted advantage (broadcast over the step's single action);
/// the step-count action carries the response's first-step advantage — its
/// full discounted return. Clip bounds come from the group's difficulty.
pub fn prepare_scpo(
    rollout: &GroupRollout,
    scores: &GroupScores,
    clip: &ClipConfig,
) -> Result<PreparedGroup> {
    let rho = rollout.group.difficulty();
    debug_assert_eq!(rho, scores.difficulty);
    let (eps_low, eps_high) = clip_bounds(rho, clip)?;
    let mut actions = Vec::new();
    for (i, response_actions) in rollout.actions.iter().enumerate() {
        let step_advantages = &scores.table.advantages[i];
        // One action per step: broadcast with unit token counts.
        let per_action = broadcast_to_tokens(step_advantages, &vec![1; step_advantages.len()])?;
        for (a, record) in response_actions.iter().enumerate() {
            let advantage = match record.kind {
                ActionKind::StepCount { .. } => step_advantages[0],
                ActionKind::StepLength { .. } => per_action[a - 1],
            };
            actions.push(PreparedAction {
                kind: record.kind,
                choice: record.choice,
                old_log_prob: record.old_log_prob,
                advantage,
            });
        }
    }
    Ok(PreparedGroup {
        actions,
        eps_low,
        eps_high,
    })
}

/// Builds the global-baseline update input: response reward
/// 1(correct) - lambda * length / (group mean length), outcome-normalized,
/// with the same advantage on every action of the response.
pub fn prepare_global(
    rollout: &GroupRollout,
    clip: &ClipConfig,
    lambda: f64,
    length_scale: f64,
) -> Result<PreparedGroup> {
    if length_scale.is_nan() || length_scale <= 0.0 {
        return Err(Error::ConfigError(
            "global length scale must be positive".into(),
        ));
    }
    let rho = rollout.group.difficulty();
    let (eps_low, eps_high) = clip_bounds(rho, clip)?;
    let rewards: Vec<f64> = rollout
        .group
        .responses
        .iter()
        .map(|r| f64::from(u8::from(r.is_correct)) - lambda * r.total_length() as f64 / length_scale)
        .collect();
    let advantages = outcome_advantage(&rewards);
    let mut actions = Vec::new();
    for (i, response_actions) in rollout.actions.iter().enumerate() {
        for record in response_actions {
            actions.push(PreparedAction {
                kind: record.kind,
                choice: record.choice,
                old_log_prob: record.old_log_prob,
                advantage: advantages[i],
            });
        }
    }
    Ok(PreparedGroup {
        actions,
        eps_low,
        eps_high,
    })
}

/// Statistics of one policy update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    /// Mean clipped surrogate over all actions in the batch.
    pub objective: f64,
    /// Fraction of actions on the strictly-clipped branch.
    pub clipped_fraction: f64,
    pub actions: usize,
}

/// One gradient-ascent step on the clipped surrogate over the batch.
pub fn policy_update(
    policy: &mut PolicyParams,
    batch: &[PreparedGroup],
    learning_rate: f64,
) -> Result<UpdateStats> {
    let total_actions: usize = batch.iter().map(|g| g.actions.len()).sum();
    if total_actions == 0 {
        return Ok(UpdateStats {
            objective: 0.0,
            clipped_fraction: 0.0,
            actions: 0,
        });
    }
    let mut grad = PolicyGrad::zeros_like(policy);
    let mut objective = 0.0;
    let mut clipped = 0usize;
    for group in batch {
        let input = SurrogateInput {
            new_log_probs: group
                .actions
                .iter()
                .map(|a| policy.log_prob(a.kind, a.choice))
                .collect(),
            old_log_probs: group.actions.iter().map(|a| a.old_log_prob).collect(),
            advantages: group.actions.iter().map(|a| a.advantage).collect(),
            eps_low: group.eps_low,
            eps_high: group.eps_high,
        };
        let terms = surrogate_action_terms(&input)?;
        for (action, term) in group.actions.iter().zip(&terms) {
            objective += term.value;
            clipped += usize::from(term.clipped);
            grad.accumulate(
                policy,
                action.kind,
                action.choice,
                term.grad_coefficient / total_actions as f64,
            );
        }
    }
    grad.apply(policy, learning_rate);
    Ok(UpdateStats {
        objective: objective / total_actions as f64,
        clipped_fraction: clipped as f64 / total_actions as f64,
        actions: total_actions,
    })
}

/// Scores a batch and applies one step-level update (convenience wrapper
/// over `prepare_scpo` + `policy_update`).
pub fn scpo_update(
    policy: &mut PolicyParams,
    rollouts: &[GroupRollout],
    config: &TrainConfig,
) -> Result<UpdateStats> {
    config.validate()?;
    let score_config = config.score_config();
    let prepared: Vec<PreparedGroup> = rollouts
        .iter()
        .map(|rollout| {
            let scores = score_group(&rollout.group, &rollout.oracle(), &score_config)?;
            prepare_scpo(rollout, &scores, &config.clip)
        })
        .collect::<Result<_>>()?;
    policy_update(policy, &prepared, config.learning_rate)
}

/// One update of the global length-penalty baseline.
pub fn global_baseline_update(
    policy: &mut PolicyParams,
    rollouts: &[GroupRollout],
    config: &TrainConfig,
) -> Result<UpdateStats> {
    config.validate()?;
    let prepared: Vec<PreparedGroup> = rollouts
        .iter()
        .map(|rollout| prepare_global(rollout, &config.clip, config.global_lambda, config.global_length_scale))
        .collect::<Result<_>>()?;
    policy_update(policy, &prepared, config.learning_rate)
}

/// Imitation step on the shortest correct response of each group: one
/// gradient-ascent step on the mean log-likelihood of the selected actions.
/// Errors with `NoWarmupData` when no group has a qualifying response.
pub fn warmup_imitation(
    policy: &mut PolicyParams,
    rollouts: &[GroupRollout],
    cap: u64,
    learning_rate: f64,
) -> Result<usize> {
    let mut selected: Vec<(&GroupRollout, usize)> = Vec::new();
    for rollout in rollouts {
        if let Some(response) = select_shortest_correct(&rollout.group.responses, cap) {
            let index = rollout
                .group
                .responses
                .iter()
                .position(|r| std::ptr::eq(r, response))
                .expect("selected response belongs to the group");
            selected.push((rollout, index));
        }
    }
    if selected.is_empty() {
        return Err(Error::NoWarmupData);
    }
    let weight = 1.0 / selected.len() as f64;
    let mut grad = PolicyGrad::zeros_like(policy);
    for (rollout, index) in &selected {
        for action in &rollout.actions[*index] {
            grad.accumulate(policy, action.kind, action.choice, weight);
        }
    }
    grad.apply(policy, learning_rate);
    Ok(selected.len())
}

/// Log-likelihood of a response's recorded actions under `policy`.
pub fn action_log_likelihood(policy: &PolicyParams, actions: &[ActionRecord]) -> f64 {
    actions
        .iter()
        .map(|a| policy.log_prob(a.kind, a.choice))
        .sum()
}

/// Runs a full experiment and returns the per-iteration metric series.
/// Deterministic for a fixed configuration: instances, rollouts, answer
/// draws, and initialization each use named substreams of the master seed.
pub fn run_experiment(train: &TrainConfig, env: &EnvSpec, method: Method) -> Result<RunMetrics> {
    train.validate()?;
    env.validate()?;
    let law = SyntheticOracle::new(env.base_rate, env.steepness, env.saturation)?;
    let mut policy = PolicyParams::init(
        env.min_slots,
        env.max_slots,
        env.length_bins.len(),
        train.init_long_bias,
        train.init_count_bias,
        &mut stream_rng(train.seed, "init", &[]),
    )?;
    for round in 0..train.warmup_rounds {
        let ri = round as u64;
        let warmup: Vec<GroupRollout> = (0..train.questions_per_batch)
            .map(|q| {
                let qi = q as u64;
                let instance = sample_instance(
                    env,
                    format!("warmup-{round}-q{q}"),
                    &mut stream_rng(train.seed, "warmup-env", &[ri, qi]),
                );
                rollout_group(
                    &policy,
                    &instance,
                    train.group_size,
                    &env.length_bins,
                    &law,
                    &mut stream_rng(train.seed, "warmup-rollout", &[ri, qi]),
                    &mut stream_rng(
                        train.seed,
                        "warmup-answer",
                        &[env.answer_noise_salt, ri, qi],
                    ),
                )
            })
            .collect::<Result<_>>()?;
        // A round with no qualifying response is skipped, not fatal: the
        // warm-up set simply drops those questions.
        match warmup_imitation(&mut policy, &warmup, train.warmup_cap, train.learning_rate) {
            Ok(_) | Err(Error::NoWarmupData) => {}
            Err(other) => return Err(other),
        }
    }
    let score_config = train.score_config();
    let mut iterations = Vec::with_capacity(train.iterations);
    for iteration in 0..train.iterations {
        let batch: Vec<(GroupRollout, GroupScores)> =
            map_indexed(train.questions_per_batch, |q| {
                let qi = q as u64;
                let it = iteration as u64;
                let instance = sample_instance(
                    env,
                    format!("i{iteration}-q{q}"),
                    &mut stream_rng(train.seed, "env", &[it, qi]),
                );
                let rollout = rollout_group(
                    &policy,
                    &instance,
                    train.group_size,
                    &env.length_bins,
                    &law,
                    &mut stream_rng(train.seed, "rollout", &[it, qi]),
                    &mut stream_rng(train.seed, "answer", &[env.answer_noise_salt, it, qi]),
                )?;
                let scores = score_group(&rollout.group, &rollout.oracle(), &score_config)?;
                Ok::<_, Error>((rollout, scores))
            })
            .into_iter()
            .collect::<Result<_>>()?;

        let mut row = batch_metrics(&policy, iteration, &batch, train.difficulty_split);

        if method != Method::None && train.learning_rate > 0.0 {
            let prepared: Vec<PreparedGroup> = batch
                .iter()
                .map(|(rollout, scores)| match method {
                    Method::Scpo => prepare_scpo(rollout, scores, &train.clip),
                    Method::Global => {
                        prepare_global(rollout, &train.clip, train.global_lambda, train.global_length_scale)
                    }
                    Method::None => unreachable!(),
                })
                .collect::<Result<_>>()?;
            let mut clipped = 0.0;
            for _ in 0..train.updates_per_batch {
                let stats = policy_update(&mut policy, &prepared, train.learning_rate)?;
                clipped += stats.clipped_fraction;
            }
            row.clipped_fraction = clipped / train.updates_per_batch as f64;
        }
        iterations.push(row);
        if iteration % 100 == 0 {
            log::debug!(
                "iter {iteration}: mean_length {:.2}, accuracy {:.3}",
                iterations.last().unwrap().mean_length,
                iterations.last().unwrap().accuracy
            );
        }
    }
    Ok(RunMetrics { iterations })
}

fn batch_metrics(
    policy: &PolicyParams,
    iteration: usize,
    batch: &[(GroupRollout, GroupScores)],
    difficulty_split: f64,
) -> IterationMetrics {
    let mut total_length = 0u64;
    let mut responses = 0usize;
    let mut correct = 0usize;
    let mut effective_steps = 0u64;
    let mut total_steps = 0u64;
    let mut effective_length = 0u64;
    let mut entropy_sum = 0.0;
    let mut entropy_count = 0usize;
    let mut rho_sum = 0.0;
    let mut buckets = [(0u64, 0u64, 0u64); 2]; // (groups, effective, total) for low/high
    for (rollout, scores) in batch {
        let rho = rollout.group.difficulty();
        rho_sum += rho;
        let bucket = &mut buckets[usize::from(rho > difficulty_split)];
        bucket.0 += 1;
        for (i, response) in rollout.group.responses.iter().enumerate() {
            responses += 1;
            correct += usize::from(response.is_correct);
            total_length += response.total_length();
            for (j, step) in response.steps.iter().enumerate() {
                total_steps += 1;
                bucket.2 += 1;
                if scores.effective[i][j] {
                    effective_steps += 1;
                    bucket.1 += 1;
                    effective_length += step.length;
                }
            }
        }
        entropy_sum += instance_policy_entropy(policy, &rollout.instance);
        entropy_count += 1;
    }
    IterationMetrics {
        iteration,
        mean_length: total_length as f64 / responses.max(1) as f64,
        accuracy: correct as f64 / responses.max(1) as f64,
        effective_step_fraction: effective_steps as f64 / total_steps.max(1) as f64,
        effective_length_share: effective_length as f64 / total_length.max(1) as f64,
        entropy: entropy_sum / entropy_count.max(1) as f64,
        mean_rho: rho_sum / batch.len().max(1) as f64,
        clipped_fraction: 0.0,
        low_groups: buckets[0].0,
        low_effective_steps: buckets[0].1,
        low_total_steps: buckets[0].2,
        high_groups: buckets[1].0,
        high_effective_steps: buckets[1].1,
        high_total_steps: buckets[1].2,
    }
}
