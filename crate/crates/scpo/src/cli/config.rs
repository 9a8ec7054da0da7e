//! Run configuration: one TOML file carrying every knob, with defaults
//! matching the library. Unknown keys are rejected. The resolved form is
//! re-serialized verbatim into run metadata and hashed so outputs are
//! traceable to their exact configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::advantage::NormScope;
use crate::error::{Error, Result};
use crate::objective::ClipConfig;
use crate::reward::RewardConfig;
use crate::sim::{EnvSpec, TrainConfig};
use crate::trajectory::{default_keywords, SegmentationPolicy};

/// Optional default IO paths; command-line flags override them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct IoConfig {
    pub out_dir: Option<PathBuf>,
    pub traces: Option<PathBuf>,
}

/// The whole run configuration.
///
/// Units: step `length` and `token_count` are counts in tokens when the
/// producing tool supplied token counts, whitespace-delimited words
/// otherwise; the simulator's length bins are in the same unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; all substreams derive from it.
    pub seed: u64,
    /// Reasoning-transition keywords for trace ingestion.
    pub keywords: Vec<String>,
    /// How raw response text is cut into steps when a trace supplies text
    /// without explicit steps.
    pub segmentation: SegmentationPolicy,
    /// Reward-normalization pooling scope.
    pub norm_scope: NormScope,
    pub io: IoConfig,
    pub env: EnvSpec,
    pub train: TrainSection,
    pub reward: RewardConfig,
    pub clip: ClipConfig,
}

/// Training knobs as they appear in the file; `reward` and `clip` live in
/// their own sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub group_size: usize,
    pub questions_per_batch: usize,
    pub iterations: usize,
    pub updates_per_batch: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    pub global_lambda: f64,
    pub global_length_scale: f64,
    pub effective_threshold: f64,
    pub difficulty_split: f64,
    pub init_long_bias: f64,
    pub init_count_bias: f64,
    pub warmup_rounds: usize,
    pub warmup_cap: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            group_size: t.group_size,
            questions_per_batch: t.questions_per_batch,
            iterations: t.iterations,
            updates_per_batch: t.updates_per_batch,
            learning_rate: t.learning_rate,
            gamma: t.gamma,
            global_lambda: t.global_lambda,
            global_length_scale: t.global_length_scale,
            effective_threshold: t.effective_threshold,
            difficulty_split: t.difficulty_split,
            init_long_bias: t.init_long_bias,
            init_count_bias: t.init_count_bias,
            warmup_rounds: t.warmup_rounds,
            warmup_cap: t.warmup_cap,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: TrainConfig::default().seed,
            keywords: default_keywords(),
            segmentation: SegmentationPolicy::default(),
            norm_scope: NormScope::default(),
            io: IoConfig::default(),
            env: EnvSpec::default(),
            train: TrainSection::default(),
            reward: RewardConfig::default(),
            clip: ClipConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::ConfigError(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text)
            .map_err(|e| Error::ConfigError(format!("config parse error: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.train_config().validate()?;
        Ok(())
    }

    /// The simulator-facing view of this configuration.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            group_size: self.train.group_size,
            questions_per_batch: self.train.questions_per_batch,
            iterations: self.train.iterations,
            updates_per_batch: self.train.updates_per_batch,
            learning_rate: self.train.learning_rate,
            gamma: self.train.gamma,
            reward: self.reward,
            clip: self.clip,
            global_lambda: self.train.global_lambda,
            global_length_scale: self.train.global_length_scale,
            effective_threshold: self.train.effective_threshold,
            difficulty_split: self.train.difficulty_split,
            norm_scope: self.norm_scope,
            init_long_bias: self.train.init_long_bias,
            init_count_bias: self.train.init_count_bias,
            seed: self.seed,
            keywords: self.keywords.clone(),
            warmup_rounds: self.train.warmup_rounds,
            warmup_cap: self.train.warmup_cap,
        }
    }

    /// Canonical serialized form; parsing it back yields an equal config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical form; embedded in every emitted file.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
