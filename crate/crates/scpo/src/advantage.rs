//! Advantage estimation over step rewards: group reward normalization, the
//! plain suffix-sum advantage, its discounted form, the per-token broadcast,
//! and the outcome-level group advantage used by baselines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{mean, population_std};
use crate::NUMERICAL_FLOOR;

/// Which steps pool together for reward normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NormScope {
    /// All steps of all responses in the group (the default reading of the
    /// unrestricted mean).
    #[default]
    Group,
    /// Correct-response steps and incorrect-response steps normalized
    /// separately; provided for sensitivity analysis.
    Partition,
}

/// Per-group score matrices, all sharing the group's ragged shape.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreTable {
    pub rewards: Vec<Vec<f64>>,
    pub normalized: Vec<Vec<f64>>,
    pub advantages: Vec<Vec<f64>>,
    pub token_advantages: Vec<Vec<f64>>,
}

/// Standardizes every step reward against the mean and population standard
/// deviation over all steps of all responses in the group. Degenerate
/// spread yields all zeros.
pub fn normalize_rewards(rewards: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let flat: Vec<f64> = rewards.iter().flatten().copied().collect();
    if flat.is_empty() {
        return Err(Error::EmptyGroup("reward normalization"));
    }
    let m = mean(&flat);
    let sd = population_std(&flat);
    let transform = |v: f64| {
        if sd < NUMERICAL_FLOOR {
            0.0
        } else {
            (v - m) / sd
        }
    };
    Ok(rewards
        .iter()
        .map(|row| row.iter().map(|&v| transform(v)).collect())
        .collect())
}

/// `normalize_rewards` with a scope switch; `NormScope::Partition`
/// standardizes the correct and incorrect sides independently.
pub fn normalize_rewards_scoped(
    rewards: &[Vec<f64>],
    is_correct: &[bool],
    scope: NormScope,
) -> Result<Vec<Vec<f64>>> {
    match scope {
        NormScope::Group => normalize_rewards(rewards),
        NormScope::Partition => {
            if rewards.len() != is_correct.len() {
                return Err(Error::ShapeError(format!(
                    "{} reward rows vs {} correctness flags",
                    rewards.len(),
                    is_correct.len()
                )));
            }
            let mut out = vec![Vec::new(); rewards.len()];
            for target in [true, false] {
                let flat: Vec<f64> = rewards
                    .iter()
                    .zip(is_correct)
                    .filter(|(_, &flag)| flag == target)
                    .flat_map(|(row, _)| row.iter().copied())
                    .collect();
                if flat.is_empty() {
                    continue;
                }
                let m = mean(&flat);
                let sd = population_std(&flat);
                for (i, row) in rewards.iter().enumerate() {
                    if is_correct[i] == target {
                        out[i] = row
                            .iter()
                            .map(|&v| if sd < NUMERICAL_FLOOR { 0.0 } else { (v - m) / sd })
                            .collect();
                    }
                }
            }
            Ok(out)
        }
    }
}

/// Inclusive suffix sum: A_j = sum of the normalized rewards from step j to
/// the end of the row.
pub fn suffix_advantage(normalized_row: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; normalized_row.len()];
    let mut acc = 0.0;
    for (j, &r) in normalized_row.iter().enumerate().rev() {
        acc += r;
        out[j] = acc;
    }
    out
}

/// Discounted suffix sum A_j = sum_n gamma^n * r_{j+n}, computed by one
/// backward pass A_j = r_j + gamma * A_{j+1}. At gamma = 1 this reduces to
/// `suffix_advantage`; at gamma = 0 it is the normalized reward itself.
pub fn s_gae(normalized_row: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::ConfigError(format!(
            "discount factor {gamma} outside [0, 1]"
        )));
    }
    let mut out = vec![0.0; normalized_row.len()];
    let mut next = 0.0;
    for (j, &r) in normalized_row.iter().enumerate().rev() {
        next = r + gamma * next;
        out[j] = next;
    }
    Ok(out)
}

/// Replicates each step's advantage onto every one of its tokens. The value
/// is copied, not divided: every token of step j carries A_j, mirroring how
/// outcome-supervision assigns one return to all tokens.
pub fn broadcast_to_tokens(advantages: &[f64], token_counts: &[u64]) -> Result<Vec<f64>> {
    if advantages.len() != token_counts.len() {
        return Err(Error::ShapeError(format!(
            "{} advantages vs {} token counts",
            advantages.len(),
            token_counts.len()
        )));
    }
    if let Some(step) = token_counts.iter().position(|&c| c == 0) {
        return Err(Error::InvalidTokenCount { step });
    }
    let total: u64 = token_counts.iter().sum();
    let mut out = Vec::with_capacity(total as usize);
    for (&a, &count) in advantages.iter().zip(token_counts) {
        out.extend(std::iter::repeat_n(a, count as usize));
    }
    Ok(out)
}

/// Outcome-supervision advantage: standardizes the G final rewards against
/// their group mean and population standard deviation. Degenerate spread
/// yields zeros. Every token of response i then carries A_i.
pub fn outcome_advantage(final_rewards: &[f64]) -> Vec<f64> {
    let m = mean(final_rewards);
    let sd = population_std(final_rewards);
    final_rewards
        .iter()
        .map(|&r| if sd < NUMERICAL_FLOOR { 0.0 } else { (r - m) / sd })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn normalize_rewards_two_single_step_rows() {
        // {1, 0}: mean 0.5, population std 0.5 -> {+1, -1}.
        let out = normalize_rewards(&[vec![1.0], vec![0.0]]).unwrap();
        assert_eq!(out, vec![vec![1.0], vec![-1.0]]);
    }

    #[test]
    fn normalize_rewards_degenerate_all_equal() {
        let out = normalize_rewards(&[vec![0.3, 0.3], vec![0.3]]).unwrap();
        assert_eq!(out, vec![vec![0.0, 0.0], vec![0.0]]);
    }

    #[test]
    fn normalize_rewards_empty_group_errors() {
        assert!(matches!(
            normalize_rewards(&[]),
            Err(Error::EmptyGroup(_))
        ));
    }

    #[test]
    fn normalized_rewards_have_zero_mean_unit_std() {
        let mut rng = crate::seeding::stream_rng(12, "normalize-prop", &[]);
        for _ in 0..300 {
            let rows: Vec<Vec<f64>> = (0..rng.random_range(1..=6usize))
                .map(|_| {
                    (0..rng.random_range(1..=7usize))
                        .map(|_| rng.random_range(-4.0..4.0))
                        .collect()
                })
                .collect();
            let out = normalize_rewards(&rows).unwrap();
            let flat: Vec<f64> = out.iter().flatten().copied().collect();
            if flat.len() > 1 && population_std(&rows.iter().flatten().copied().collect::<Vec<_>>()) > 1e-9 {
                assert!(mean(&flat).abs() < 1e-9);
                assert!((population_std(&flat) - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn normalize_rewards_affine_invariant() {
        let mut rng = crate::seeding::stream_rng(13, "normalize-affine", &[]);
        for _ in 0..200 {
            let rows: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let a = rng.random::<f64>() * 5.0 + 0.1;
            let b = rng.random_range(-3.0..3.0);
            let scaled: Vec<Vec<f64>> = rows
                .iter()
                .map(|row| row.iter().map(|v| a * v + b).collect())
                .collect();
            let base = normalize_rewards(&rows).unwrap();
            let transformed = normalize_rewards(&scaled).unwrap();
            for (r0, r1) in base.iter().flatten().zip(transformed.iter().flatten()) {
                assert!((r0 - r1).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn partition_scope_isolates_sides() {
        let rows = vec![vec![1.0, 2.0], vec![-1.0], vec![-5.0]];
        let flags = [true, false, false];
        let out = normalize_rewards_scoped(&rows, &flags, NormScope::Partition).unwrap();
        // Correct side {1, 2} -> {-1, +1}; incorrect side {-1, -5} -> {+1, -1}.
        assert_eq!(out[0], vec![-1.0, 1.0]);
        assert_eq!(out[1], vec![1.0]);
        assert_eq!(out[2], vec![-1.0]);
    }

    #[test]
    fn suffix_advantage_examples() {
        assert_eq!(suffix_advantage(&[1.0, 1.0, 1.0]), vec![3.0, 2.0, 1.0]);
        assert_eq!(suffix_advantage(&[4.5]), vec![4.5]);
        assert_eq!(suffix_advantage(&[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn s_gae_reduces_to_suffix_sum_at_gamma_one() {
        let mut rng = crate::seeding::stream_rng(14, "sgae-prop", &[]);
        for _ in 0..1000 {
            let k = rng.random_range(1..=200usize);
            let row: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
            let discounted = s_gae(&row, 1.0).unwrap();
            let suffix = suffix_advantage(&row);
            for (a, b) in discounted.iter().zip(&suffix) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn s_gae_at_gamma_zero_is_identity() {
        let row = [0.3, -1.2, 2.0];
        assert_eq!(s_gae(&row, 0.0).unwrap(), row.to_vec());
    }

    #[test]
    fn s_gae_hand_example() {
        // [1, 1, 1] at gamma = 0.5: [1.75, 1.5, 1].
        let out = s_gae(&[1.0, 1.0, 1.0], 0.5).unwrap();
        assert_eq!(out, vec![1.75, 1.5, 1.0]);
    }

    #[test]
    fn s_gae_rejects_out_of_range_gamma() {
        assert!(matches!(
            s_gae(&[1.0], 1.5),
            Err(Error::ConfigError(_))
        ));
        assert!(s_gae(&[1.0], -0.1).is_err());
    }

    #[test]
    fn s_gae_matches_direct_power_sum() {
        let mut rng = crate::seeding::stream_rng(15, "sgae-direct", &[]);
        for _ in 0..200 {
            let k = rng.random_range(1..=12usize);
            let gamma = rng.random::<f64>();
            let row: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
            let fast = s_gae(&row, gamma).unwrap();
            for (j, &a) in fast.iter().enumerate() {
                let direct: f64 = (j..k).map(|m| gamma.powi((m - j) as i32) * row[m]).sum();
                assert!((a - direct).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn length_bias_shrinks_under_discounting() {
        // Constant reward c over rows of length 5 and 10. Undiscounted
        // first-step advantages are 5c and 10c; at gamma = 0.95 they are the
        // geometric sums c * (1 - 0.95^k) / 0.05.
        let c = 0.37;
        let short = vec![c; 5];
        let long = vec![c; 10];
        let undiscounted_short = suffix_advantage(&short)[0];
        let undiscounted_long = suffix_advantage(&long)[0];
        assert!((undiscounted_short - 5.0 * c).abs() < 1e-12);
        assert!((undiscounted_long - 10.0 * c).abs() < 1e-12);

        let geometric = |k: u32| (1.0 - 0.95f64.powi(k as i32)) / (1.0 - 0.95);
        let discounted_short = s_gae(&short, 0.95).unwrap()[0];
        let discounted_long = s_gae(&long, 0.95).unwrap()[0];
        assert!((discounted_short - c * geometric(5)).abs() < 1e-6);
        assert!((discounted_long - c * geometric(10)).abs() < 1e-6);
        // Quoted to four decimals: 4.5244c and 8.0252c.
        assert!((geometric(5) - 4.524_381_25).abs() < 1e-9);
        assert!((geometric(10) - 8.025_261_215_232_426).abs() < 1e-9);
        // The long-row edge shrinks from 5c to about 3.5009c but stays positive.
        let gap_undiscounted = undiscounted_long - undiscounted_short;
        let gap_discounted = discounted_long - discounted_short;
        assert!((gap_undiscounted - 5.0 * c).abs() < 1e-12);
        assert!((gap_discounted - c * (geometric(10) - geometric(5))).abs() < 1e-6);
        assert!(gap_discounted < gap_undiscounted);
        assert!(gap_discounted > 0.0);
    }

    #[test]
    fn broadcast_replicates_per_token() {
        let out = broadcast_to_tokens(&[2.0, -1.0], &[3, 2]).unwrap();
        assert_eq!(out, vec![2.0, 2.0, 2.0, -1.0, -1.0]);
        assert_eq!(
            broadcast_to_tokens(&[0.5, 0.25], &[1, 1]).unwrap(),
            vec![0.5, 0.25]
        );
        assert_eq!(broadcast_to_tokens(&[7.0], &[4]).unwrap(), vec![7.0; 4]);
    }

    #[test]
    fn broadcast_rejects_zero_counts_and_bad_shapes() {
        assert!(matches!(
            broadcast_to_tokens(&[1.0, 2.0], &[3, 0]),
            Err(Error::InvalidTokenCount { step: 1 })
        ));
        assert!(matches!(
            broadcast_to_tokens(&[1.0], &[1, 1]),
            Err(Error::ShapeError(_))
        ));
    }

    #[test]
    fn broadcast_preserves_step_means() {
        let mut rng = crate::seeding::stream_rng(16, "broadcast-prop", &[]);
        for _ in 0..200 {
            let k = rng.random_range(1..=6usize);
            let adv: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
            let counts: Vec<u64> = (0..k).map(|_| rng.random_range(1..=9u64)).collect();
            let tokens = broadcast_to_tokens(&adv, &counts).unwrap();
            let mut offset = 0usize;
            for (j, &count) in counts.iter().enumerate() {
                let block = &tokens[offset..offset + count as usize];
                let block_mean = block.iter().sum::<f64>() / count as f64;
                assert!((block_mean - adv[j]).abs() < 1e-12);
                offset += count as usize;
            }
            assert_eq!(offset, tokens.len());
        }
    }

    #[test]
    fn outcome_advantage_examples() {
        let out = outcome_advantage(&[1.0, 0.0]);
        assert_eq!(out, vec![1.0, -1.0]);
        assert_eq!(outcome_advantage(&[0.4; 5]), vec![0.0; 5]);
    }

    #[test]
    fn outcome_advantage_is_permutation_equivariant() {
        let rewards = [0.9, -0.3, 0.1, 0.5];
        let forward = outcome_advantage(&rewards);
        let mut reversed: Vec<f64> = rewards.to_vec();
        reversed.reverse();
        let mut back = outcome_advantage(&reversed);
        back.reverse();
        for (a, b) in forward.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
