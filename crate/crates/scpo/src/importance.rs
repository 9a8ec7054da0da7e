//! Online step-importance evaluation: raw length-normalized scores from
//! answer-probability ablation, the difficulty-scaled keyword bonus, and
//! per-group min-max normalization split by answer correctness.

use crate::error::{Error, Result};
use crate::NUMERICAL_FLOOR;

/// Raw importance of one step from the answer probabilities with (`p1`) and
/// without (`p2`) it, length-normalized:
///
/// d = 0                          if p1 <= p2
/// d = (p1^2 - p2^2) / (p1^2 * l) if p1 >  p2
///
/// A removal that does not lower the answer probability marks the step
/// unimportant; otherwise the relative squared drop is divided by step
/// length to remove length bias.
pub fn raw_importance(p1: f64, p2: f64, length: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p1) && (0.0..=1.0).contains(&p2));
    debug_assert!(length >= 1.0);
    if p1 <= p2 {
        return 0.0;
    }
    let denom = p1 * p1;
    if denom < NUMERICAL_FLOOR {
        return 0.0;
    }
    (p1 * p1 - p2 * p2) / (denom * length)
}

/// Adds the keyword bonus to one response's raw scores: steps flagged as
/// containing a reasoning-transition keyword gain `rho * max_j(d_j)`, with
/// the max taken over the same response's raw (pre-bonus) scores.
pub fn apply_additional_score(
    raw: &[f64],
    keyword_flags: &[bool],
    rho: f64,
) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(Error::EmptyRow);
    }
    if raw.len() != keyword_flags.len() {
        return Err(Error::ShapeError(format!(
            "{} scores vs {} keyword flags",
            raw.len(),
            keyword_flags.len()
        )));
    }
    let bonus = rho * raw.iter().cloned().fold(f64::MIN, f64::max);
    Ok(raw
        .iter()
        .zip(keyword_flags)
        .map(|(&d, &flagged)| if flagged { d + bonus } else { d })
        .collect())
}

/// Min-max normalizes a group's bonus-adjusted scores to [0, 1], separately
/// over the steps of correct responses and the steps of incorrect ones so
/// the two partitions cannot interfere.
///
/// A partition whose spread falls below the numerical floor maps to the
/// degenerate constant 0.5 (a neutral value for the downstream penalty);
/// an empty partition is skipped.
pub fn minmax_normalize(rows: &[Vec<f64>], is_correct: &[bool]) -> Result<Vec<Vec<f64>>> {
    if rows.is_empty() {
        return Err(Error::EmptyGroup("min-max normalization"));
    }
    if rows.len() != is_correct.len() {
        return Err(Error::ShapeError(format!(
            "{} rows vs {} correctness flags",
            rows.len(),
            is_correct.len()
        )));
    }
    let partition_range = |target: bool| -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut seen = false;
        for (row, &flag) in rows.iter().zip(is_correct) {
            if flag != target {
                continue;
            }
            for &v in row {
                lo = lo.min(v);
                hi = hi.max(v);
                seen = true;
            }
        }
        seen.then_some((lo, hi))
    };
    let ranges = [partition_range(true), partition_range(false)];
    let normalized = rows
        .iter()
        .zip(is_correct)
        .map(|(row, &flag)| {
            let (lo, hi) = ranges[usize::from(!flag)]
                .expect("partition containing a row cannot be empty");
            row.iter()
                .map(|&v| {
                    if hi - lo < NUMERICAL_FLOOR {
                        0.5
                    } else {
                        (v - lo) / (hi - lo)
                    }
                })
                .collect()
        })
        .collect();
    Ok(normalized)
}

/// Plain min-max scaling of one pooled value set to [0, 1]. Degenerate
/// spread maps everything to 0. Used by the effectiveness diagnostics,
/// which scale raw importance over the whole group without a correctness
/// split.
pub fn minmax_scale(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || hi - lo < NUMERICAL_FLOOR {
        return vec![0.0; values.len()];
    }
    values.iter().map(|&v| (v - lo) / (hi - lo)).collect()
}

/// Marks effective steps: already-normalized importance strictly above
/// `threshold` (default 0.01 in run configuration).
pub fn effective_step_mask(normalized: &[f64], threshold: f64) -> Vec<bool> {
    normalized.iter().map(|&d| d > threshold).collect()
}

/// Effectiveness mask straight from raw importance: min-max scale the pooled
/// group scores, then threshold. When the spread is degenerate the scaled
/// values carry no information, so a step counts as effective iff its raw
/// score is positive.
pub fn effective_mask_from_raw(raw: &[f64], threshold: f64) -> Vec<bool> {
    let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || hi - lo < NUMERICAL_FLOOR {
        return raw.iter().map(|&d| d > 0.0).collect();
    }
    effective_step_mask(&minmax_scale(raw), threshold)
}
