use serde::{Deserialize, Serialize};

use super::binning::{bin_assign, BinningSpec};
use super::{MetricsError, Result};
use crate::scoring::{threshold_predict, ThresholdPolicy};

pub const HISTOGRAM_CELLS: usize = 20;

fn check(scores: &[f64], labels: &[u8]) -> Result<usize> {
    assert_eq!(scores.len(), labels.len(), "scores and labels differ in length");
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(scores.len())
}

/// Sum over bins of |Σy − Σr|, divided by n.
pub fn ece(scores: &[f64], labels: &[u8], spec: BinningSpec) -> Result<f64> {
    let n = check(scores, labels)?;
    let bins = bin_assign(scores, spec);
    let mut gap = vec![0.0f64; spec.bins];
    for ((&r, &y), &b) in scores.iter().zip(labels).zip(&bins) {
        gap[b] += f64::from(y) - r;
    }
    Ok(gap.iter().map(|g| g.abs()).sum::<f64>() / n as f64)
}

pub fn brier(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let n = check(scores, labels)?;
    Ok(scores
        .iter()
        .zip(labels)
        .map(|(&r, &y)| (r - f64::from(y)).powi(2))
        .sum::<f64>()
        / n as f64)
}

/// Mann-Whitney AUC with tied scores counted as one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let n = check(scores, labels)?;
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::Undefined("AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the positive rank sum, so midranks stay integral.
    let mut rank_sum_x2: u128 = 0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank_x2 = (i + 1 + j + 1) as u128;
        let pos_in_run = order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as u128;
        rank_sum_x2 += midrank_x2 * pos_in_run;
        i = j + 1;
    }
    let (p, q) = (n_pos as u128, n_neg as u128);
    let u_x2 = rank_sum_x2 - p * (p + 1);
    Ok(u_x2 as f64 / (2 * p * q) as f64)
}

pub fn accuracy(scores: &[f64], labels: &[u8], policy: ThresholdPolicy) -> Result<f64> {
    let n = check(scores, labels)?;
    let correct = scores
        .iter()
        .zip(labels)
        .filter(|(&r, &y)| threshold_predict(r, policy) == y)
        .count();
    Ok(correct as f64 / n as f64)
}

/// Size-weighted sum over bins of (mean max(r, 1−r) − thresholded accuracy).
/// Positive means over-confident.
pub fn confidence_bias(scores: &[f64], labels: &[u8], spec: BinningSpec, policy: ThresholdPolicy) -> Result<f64> {
    let n = check(scores, labels)?;
    let bins = bin_assign(scores, spec);
    let mut conf = vec![0.0f64; spec.bins];
    let mut correct = vec![0usize; spec.bins];
    let mut count = vec![0usize; spec.bins];
    for ((&r, &y), &b) in scores.iter().zip(labels).zip(&bins) {
        conf[b] += r.max(1.0 - r);
        correct[b] += usize::from(threshold_predict(r, policy) == y);
        count[b] += 1;
    }
    Ok((0..spec.bins)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let size = count[b] as f64;
            (size / n as f64) * (conf[b] / size - correct[b] as f64 / size)
        })
        .sum())
}

/// mean(r − y). Positive means scores run high.
pub fn signed_calibration_error(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let n = check(scores, labels)?;
    Ok(scores.iter().zip(labels).map(|(&r, &y)| r - f64::from(y)).sum::<f64>() / n as f64)
}

/// The same quantity accumulated bin by bin; equal to the unbinned form.
pub fn signed_calibration_error_binned(scores: &[f64], labels: &[u8], spec: BinningSpec) -> Result<f64> {
    let n = check(scores, labels)?;
    let bins = bin_assign(scores, spec);
    let mut per_bin = vec![0.0f64; spec.bins];
    for ((&r, &y), &b) in scores.iter().zip(labels).zip(&bins) {
        per_bin[b] += r - f64::from(y);
    }
    Ok(per_bin.iter().sum::<f64>() / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    /// Counts over 20 equal-width cells on [0, 1].
    pub histogram: Vec<u64>,
}

pub fn score_distribution_stats(scores: &[f64]) -> Result<ScoreStats> {
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let mut histogram = vec![0u64; HISTOGRAM_CELLS];
    for b in bin_assign(scores, BinningSpec::equal_width(HISTOGRAM_CELLS)) {
        histogram[b] += 1;
    }
    Ok(ScoreStats {
        mean,
        std: var.sqrt(),
        histogram,
    })
}
