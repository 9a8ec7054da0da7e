//! Per-iteration training metrics and the summaries derived from them.

use serde::Serialize;

use crate::stats::pearson;

/// One iteration's aggregates over the batch, measured on the rollouts
/// before that iteration's updates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    /// Mean total response length.
    pub mean_length: f64,
    /// Fraction of correct responses.
    pub accuracy: f64,
    /// Effective steps / total steps, pooled over the batch.
    pub effective_step_fraction: f64,
    /// Length carried by effective steps / total length.
    pub effective_length_share: f64,
    /// Mean sampling-time action-distribution entropy.
    pub entropy: f64,
    /// Mean group difficulty.
    pub mean_rho: f64,
    /// Mean clipped-action fraction over the iteration's updates.
    pub clipped_fraction: f64,
    /// Difficulty-bucket counters (difficulty <= split is "low"); these feed
    /// the comparison summary and stay out of the CSV.
    pub low_groups: u64,
    pub low_effective_steps: u64,
    pub low_total_steps: u64,
    pub high_groups: u64,
    pub high_effective_steps: u64,
    pub high_total_steps: u64,
}

/// Full metric series for one run.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct RunMetrics {
    pub iterations: Vec<IterationMetrics>,
}

/// Aggregates of one difficulty bucket over a span of iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BucketSummary {
    pub groups: u64,
    pub effective_step_fraction: f64,
}

impl RunMetrics {
    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    /// Trailing window used for "final" summaries: the last tenth of the
    /// run, at least one iteration.
    pub fn final_window(&self) -> &[IterationMetrics] {
        let n = self.iterations.len();
        let w = (n / 10).max(1).min(n.max(1));
        &self.iterations[n - w.min(n)..]
    }

    /// Mean of a metric over the trailing window.
    pub fn final_mean(&self, metric: impl Fn(&IterationMetrics) -> f64) -> f64 {
        let window = self.final_window();
        if window.is_empty() {
            return f64::NAN;
        }
        window.iter().map(metric).sum::<f64>() / window.len() as f64
    }

    /// Pearson correlation between windowed means of difficulty and entropy.
    /// Iterations are averaged in consecutive windows of `window` (the
    /// batch-reuse count) before correlating.
    pub fn entropy_difficulty_correlation(&self, window: usize) -> f64 {
        let window = window.max(1);
        let mut rho = Vec::new();
        let mut entropy = Vec::new();
        for chunk in self.iterations.chunks(window) {
            rho.push(chunk.iter().map(|m| m.mean_rho).sum::<f64>() / chunk.len() as f64);
            entropy.push(chunk.iter().map(|m| m.entropy).sum::<f64>() / chunk.len() as f64);
        }
        pearson(&rho, &entropy)
    }

    /// Pooled effectiveness per difficulty bucket over the trailing window.
    pub fn final_bucket_summary(&self) -> (BucketSummary, BucketSummary) {
        let window = self.final_window();
        let fold = |steps: fn(&IterationMetrics) -> (u64, u64, u64)| {
            let (mut groups, mut hits, mut total) = (0u64, 0u64, 0u64);
            for m in window {
                let (g, h, t) = steps(m);
                groups += g;
                hits += h;
                total += t;
            }
            BucketSummary {
                groups,
                effective_step_fraction: if total == 0 {
                    f64::NAN
                } else {
                    hits as f64 / total as f64
                },
            }
        };
        (
            fold(|m| (m.low_groups, m.low_effective_steps, m.low_total_steps)),
            fold(|m| (m.high_groups, m.high_effective_steps, m.high_total_steps)),
        )
    }
}
