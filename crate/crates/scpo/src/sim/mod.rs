//! Toy end-to-end training: a synthetic reasoning environment, a softmax
//! policy over step counts and per-step length bins, the step-level update,
//! a global length-penalty baseline, warm-up imitation, and per-iteration
//! metrics.

pub mod env;
pub mod metrics;
pub mod policy;
pub mod train;

pub use env::{sample_instance, DensityParams, EnvSpec, Instance, Slot};
pub use metrics::{BucketSummary, IterationMetrics, RunMetrics};
pub use policy::{ActionKind, ActionRecord, PolicyGrad, PolicyParams};
pub use train::{
    global_baseline_update, instance_policy_entropy, policy_update, prepare_global, prepare_scpo,
    rollout_group, run_experiment, scpo_update, warmup_imitation, GroupRollout, Method,
    PreparedAction, PreparedGroup, TrainConfig, UpdateStats,
};
