//! Budget-matched comparison of step-level and global length control.
//!
//! A linearized policy update shrinks step i by a factor (1 - alpha *
//! lambda_i / T). Holding the post-update token budget fixed forces the
//! global penalty to equal the length-weighted mean of the per-step
//! penalties. With per-step penalties inversely tied to contribution
//! density (lambda_i = 1 - v_i), the contribution retained by step-level
//! control exceeds the global variant by
//!
//!   (alpha / T) * (sum_i v_i^2 l_i - S^2 / T),   S = sum_i v_i l_i,
//!
//! which the Cauchy-Schwarz inequality makes nonnegative, with equality
//! exactly when the density is constant across steps. `verify_theorem`
//! hammers this with random instances; trials are independent and run in
//! parallel under the `parallel` feature.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::map_indexed;
use crate::seeding::stream_rng;

/// One verification instance.
///
/// `margins` (per-step marginal contributions m_i) and `reward_std` (the
/// advantage scale sigma_r) only matter to the unapproximated update
/// variant, where the update gains an alpha * delta_i term with
/// delta_i = m_i - mean reward; the budget-matched comparison drops that
/// term and never reads them.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryInstance {
    /// Step lengths l_i > 0.
    pub lengths: Vec<f64>,
    /// Contribution densities v_i in [0, 1].
    pub densities: Vec<f64>,
    /// Per-step penalty coefficients lambda_i.
    pub step_penalties: Vec<f64>,
    /// Global penalty lambda from the budget identity.
    pub global_penalty: f64,
    /// Update step scale alpha > 0.
    pub alpha: f64,
    /// Per-step marginal contributions m_i; unused by the theorem check.
    pub margins: Option<Vec<f64>>,
    /// Reward standard deviation sigma_r; unused by the theorem check.
    pub reward_std: Option<f64>,
}

impl TheoryInstance {
    /// Builds the canonical configuration: lambda_i = 1 - v_i and the
    /// budget-matched global penalty.
    pub fn with_inverse_density_penalties(
        lengths: Vec<f64>,
        densities: Vec<f64>,
        alpha: f64,
    ) -> Result<Self> {
        if lengths.len() != densities.len() {
            return Err(Error::ShapeError(format!(
                "{} lengths vs {} densities",
                lengths.len(),
                densities.len()
            )));
        }
        if lengths.is_empty() {
            return Err(Error::InvalidData("instance has no steps".into()));
        }
        if lengths.iter().any(|&l| l.is_nan() || l <= 0.0) {
            return Err(Error::InvalidData("step lengths must be positive".into()));
        }
        if densities.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidData("densities must lie in [0, 1]".into()));
        }
        if alpha.is_nan() || alpha <= 0.0 {
            return Err(Error::InvalidData(format!("alpha {alpha} must be positive")));
        }
        let step_penalties: Vec<f64> = densities.iter().map(|v| 1.0 - v).collect();
        let global_penalty = budget_lambda(&lengths, &step_penalties);
        Ok(Self {
            lengths,
            densities,
            step_penalties,
            global_penalty,
            alpha,
            margins: None,
            reward_std: None,
        })
    }

    /// Total pre-update length T.
    pub fn total_length(&self) -> f64 {
        self.lengths.iter().sum()
    }

    /// Total contribution mass S = sum v_i * l_i.
    pub fn contribution_mass(&self) -> f64 {
        self.lengths
            .iter()
            .zip(&self.densities)
            .map(|(l, v)| l * v)
            .sum()
    }
}

/// Post-update step length under the linearized update,
/// l_i * (1 - alpha * lambda_i / T). The factor must stay positive: a step
/// size large enough to zero a length leaves the linear regime.
pub fn updated_length_step(length: f64, penalty: f64, alpha: f64, total: f64) -> Result<f64> {
    let factor = 1.0 - alpha * penalty / total;
    if factor <= 0.0 {
        return Err(Error::InvalidRegime { factor });
    }
    Ok(length * factor)
}

/// The pre-approximation update, keeping the advantage offset term:
/// l_i * (1 - alpha * lambda_i / T) + alpha * delta_i with
/// delta_i = m_i - mean reward. Exploration only — the budget-matched
/// inequality is not claimed for this form.
pub fn updated_length_unapproximated(
    length: f64,
    penalty: f64,
    alpha: f64,
    total: f64,
    delta: f64,
) -> Result<f64> {
    Ok(updated_length_step(length, penalty, alpha, total)? + alpha * delta)
}

/// Global penalty implied by an unchanged post-update token budget:
/// lambda = (sum lambda_i * l_i) / (sum l_i).
pub fn budget_lambda(lengths: &[f64], step_penalties: &[f64]) -> f64 {
    let weighted: f64 = lengths
        .iter()
        .zip(step_penalties)
        .map(|(l, p)| l * p)
        .sum();
    weighted / lengths.iter().sum::<f64>()
}

/// Contribution retained by step-level control minus the global variant:
/// (alpha / T) * (lambda * S - sum_i v_i * lambda_i * l_i).
pub fn contribution_gap(instance: &TheoryInstance) -> f64 {
    let total = instance.total_length();
    let mass = instance.contribution_mass();
    let cross: f64 = instance
        .lengths
        .iter()
        .zip(&instance.densities)
        .zip(&instance.step_penalties)
        .map(|((l, v), p)| v * p * l)
        .sum();
    instance.alpha / total * (instance.global_penalty * mass - cross)
}

/// Verification report; serializes as the theory-check CLI record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryReport {
    pub trials: u64,
    pub seed: u64,
    pub min_steps: usize,
    pub max_steps: usize,
    pub min_gap: f64,
    pub mean_gap: f64,
    pub max_gap: f64,
    /// Count of gaps below -1e-12.
    pub violations: u64,
}

/// Gaps below this are counted as violations; everything above is float
/// noise on a true value that the inequality keeps nonnegative.
pub const GAP_TOLERANCE: f64 = 1e-12;

/// Samples one random instance in the valid update regime.
pub fn sample_instance(rng: &mut impl Rng, min_steps: usize, max_steps: usize) -> TheoryInstance {
    let n = rng.random_range(min_steps..=max_steps);
    let densities: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let lengths: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..=100.0)).collect();
    let total: f64 = lengths.iter().sum();
    let max_penalty = densities
        .iter()
        .map(|v| 1.0 - v)
        .fold(f64::MIN, f64::max)
        .max(1e-6);
    // Keep max_i alpha * lambda_i / T below 0.5 so the linearized update
    // stays meaningful.
    let alpha = rng.random::<f64>() * 0.5 * total / max_penalty;
    TheoryInstance::with_inverse_density_penalties(lengths, densities, alpha.max(1e-9))
        .expect("sampled instance is valid by construction")
}

/// Runs `trials` random instances and counts violations of the
/// nonnegative-gap inequality. Deterministic per seed; trials draw from
/// independent substreams so parallel and sequential runs agree exactly.
pub fn verify_theorem(trials: u64, seed: u64, min_steps: usize, max_steps: usize) -> TheoryReport {
    let gaps = map_indexed(trials as usize, |t| {
        let mut rng = stream_rng(seed, "trial", &[t as u64]);
        let instance = sample_instance(&mut rng, min_steps, max_steps);
        contribution_gap(&instance)
    });
    summarize(trials, seed, min_steps, max_steps, &gaps)
}

/// Report over precomputed gaps; also used by the fixture path.
pub fn summarize(
    trials: u64,
    seed: u64,
    min_steps: usize,
    max_steps: usize,
    gaps: &[f64],
) -> TheoryReport {
    let min_gap = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_gap = gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean_gap = gaps.iter().sum::<f64>() / gaps.len().max(1) as f64;
    TheoryReport {
        trials,
        seed,
        min_steps,
        max_steps,
        min_gap,
        mean_gap,
        max_gap,
        violations: gaps.iter().filter(|&&g| g < -GAP_TOLERANCE).count() as u64,
    }
}

/// The Cauchy-Schwarz equality fixture: constant density across steps.
pub fn uniform_density_instance(steps: usize, density: f64, alpha: f64) -> Result<TheoryInstance> {
    let lengths: Vec<f64> = (1..=steps).map(|i| 10.0 * i as f64).collect();
    TheoryInstance::with_inverse_density_penalties(lengths, vec![density; steps], alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn updated_length_hand_evaluations() {
        // Zero penalty leaves the length unchanged.
        assert_eq!(updated_length_step(10.0, 0.0, 2.0, 20.0).unwrap(), 10.0);
        // l = 10, lambda = 0.5, alpha = 2, T = 20: 10 * (1 - 0.05) = 9.5.
        let l = updated_length_step(10.0, 0.5, 2.0, 20.0).unwrap();
        assert!((l - 9.5).abs() < 1e-12);
        // alpha = 0 is the identity regardless of penalty.
        assert_eq!(updated_length_step(7.0, 0.9, 0.0, 20.0).unwrap(), 7.0);
    }

    #[test]
    fn updated_length_rejects_regime_violation() {
        assert!(matches!(
            updated_length_step(10.0, 1.0, 30.0, 20.0),
            Err(Error::InvalidRegime { .. })
        ));
    }

    #[test]
    fn unapproximated_variant_adds_the_offset() {
        let approx = updated_length_step(10.0, 0.5, 2.0, 20.0).unwrap();
        let full = updated_length_unapproximated(10.0, 0.5, 2.0, 20.0, 0.25).unwrap();
        assert!((full - (approx + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn budget_lambda_hand_evaluations() {
        // l = [10, 10], lambda_i = [0.1, 0.9]: lambda = 0.5.
        assert!((budget_lambda(&[10.0, 10.0], &[0.1, 0.9]) - 0.5).abs() < 1e-12);
        // Uniform penalties pass through.
        assert!((budget_lambda(&[3.0, 9.0, 1.0], &[0.4, 0.4, 0.4]) - 0.4).abs() < 1e-12);
        // Single step.
        assert_eq!(budget_lambda(&[5.0], &[0.7]), 0.7);
    }

    #[test]
    fn budget_identity_round_trips() {
        let mut rng = stream_rng(31, "budget-prop", &[]);
        for _ in 0..500 {
            let instance = sample_instance(&mut rng, 2, 50);
            let total = instance.total_length();
            let weighted: f64 = instance
                .lengths
                .iter()
                .zip(&instance.step_penalties)
                .map(|(l, p)| l * p)
                .sum();
            assert!((weighted - instance.global_penalty * total).abs() <= 1e-12 * total);
        }
    }

    #[test]
    fn gap_hand_evaluation() {
        // l = [10, 10], v = [0.9, 0.1], alpha = 1:
        // S = 10, T = 20, sum v^2 l = 8.2, gap = (1/20) * (8.2 - 5.0) = 0.16.
        let instance = TheoryInstance::with_inverse_density_penalties(
            vec![10.0, 10.0],
            vec![0.9, 0.1],
            1.0,
        )
        .unwrap();
        assert!((contribution_gap(&instance) - 0.16).abs() < 1e-12);
    }

    #[test]
    fn gap_zero_for_uniform_density_and_single_step() {
        let uniform = uniform_density_instance(8, 0.37, 1.5).unwrap();
        assert!(contribution_gap(&uniform).abs() <= GAP_TOLERANCE);
        let single = TheoryInstance::with_inverse_density_penalties(vec![42.0], vec![0.3], 1.0)
            .unwrap();
        assert!(contribution_gap(&single).abs() <= GAP_TOLERANCE);
    }

    #[test]
    fn gap_matches_specialized_closed_form() {
        // Independent algebraic route: with lambda_i = 1 - v_i and the
        // budget lambda, the gap is (alpha / T) * (sum v^2 l - S^2 / T).
        let mut rng = stream_rng(32, "gap-closed-form", &[]);
        for _ in 0..500 {
            let instance = sample_instance(&mut rng, 2, 50);
            let total = instance.total_length();
            let mass = instance.contribution_mass();
            let v2l: f64 = instance
                .lengths
                .iter()
                .zip(&instance.densities)
                .map(|(l, v)| v * v * l)
                .sum();
            let closed_form = instance.alpha / total * (v2l - mass * mass / total);
            let gap = contribution_gap(&instance);
            let scale = v2l.abs().max(1.0);
            assert!(
                (gap - closed_form).abs() <= 1e-10 * scale * instance.alpha.max(1.0) / total,
                "gap {gap} vs closed form {closed_form}"
            );
        }
    }

    #[test]
    fn gap_strictly_positive_iff_density_varies() {
        let varied = TheoryInstance::with_inverse_density_penalties(
            vec![5.0, 5.0, 5.0],
            vec![0.2, 0.2, 0.8],
            1.0,
        )
        .unwrap();
        assert!(contribution_gap(&varied) > 1e-6);
        let constant = TheoryInstance::with_inverse_density_penalties(
            vec![5.0, 50.0, 500.0],
            vec![0.6, 0.6, 0.6],
            1.0,
        )
        .unwrap();
        assert!(contribution_gap(&constant).abs() <= GAP_TOLERANCE);
    }

    #[test]
    fn gap_sign_invariant_under_length_rescale() {
        let mut rng = stream_rng(33, "gap-rescale", &[]);
        for _ in 0..200 {
            let instance = sample_instance(&mut rng, 2, 20);
            let gap = contribution_gap(&instance);
            for &scale in &[0.1, 3.0, 40.0] {
                let rescaled = TheoryInstance::with_inverse_density_penalties(
                    instance.lengths.iter().map(|l| l * scale).collect(),
                    instance.densities.clone(),
                    instance.alpha,
                )
                .unwrap();
                let rescaled_gap = contribution_gap(&rescaled);
                assert_eq!(
                    gap > GAP_TOLERANCE,
                    rescaled_gap > GAP_TOLERANCE,
                    "sign changed under rescale"
                );
            }
        }
    }

    #[test]
    fn verify_theorem_reports_no_violations() {
        let report = verify_theorem(2000, 1, 2, 50);
        assert_eq!(report.violations, 0);
        assert!(report.min_gap >= -GAP_TOLERANCE);
        assert!(report.mean_gap > 0.0);
    }

    #[test]
    fn verify_theorem_is_deterministic_per_seed() {
        let a = verify_theorem(500, 9, 2, 50);
        let b = verify_theorem(500, 9, 2, 50);
        assert_eq!(a, b);
        let c = verify_theorem(500, 10, 2, 50);
        assert_ne!(a.min_gap.to_bits(), c.min_gap.to_bits());
    }

    #[test]
    fn updated_lengths_respect_the_budget_identity() {
        // The two control schemes land on the same total post-update length.
        let mut rng = stream_rng(34, "budget-total", &[]);
        for _ in 0..200 {
            let instance = sample_instance(&mut rng, 2, 30);
            let total = instance.total_length();
            let step_total: f64 = instance
                .lengths
                .iter()
                .zip(&instance.step_penalties)
                .map(|(&l, &p)| updated_length_step(l, p, instance.alpha, total).unwrap())
                .sum();
            let global_total: f64 = instance
                .lengths
                .iter()
                .map(|&l| {
                    updated_length_step(l, instance.global_penalty, instance.alpha, total)
                        .unwrap()
                })
                .sum();
            assert!((step_total - global_total).abs() < 1e-9 * total);
        }
    }
}
