use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::binning::{bin_assign, BinKind, BinningSpec};
use super::scalar::{
    accuracy, auc, brier, confidence_bias, ece, score_distribution_stats, signed_calibration_error,
};
use super::{MetricsError, Result};
use crate::scoring::{ScoredRecord, ThresholdPolicy};

/// Headline metrics for one set of scored records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n: usize,
    pub excluded_count: usize,
    pub bins: usize,
    pub tau: f64,
    pub ece_equal_width: f64,
    pub ece_quantile: f64,
    pub brier: f64,
    /// `None` when only one class is present.
    pub auc: Option<f64>,
    pub accuracy: f64,
    pub confidence_bias: f64,
    pub sce: f64,
    pub score_mean: f64,
    pub score_std: f64,
}

pub fn metric_report(
    scores: &[f64],
    labels: &[u8],
    bins: usize,
    policy: ThresholdPolicy,
    excluded_count: usize,
) -> Result<MetricReport> {
    let ew = BinningSpec::new(bins, BinKind::EqualWidth)?;
    let q = BinningSpec::new(bins, BinKind::Quantile)?;
    let stats = score_distribution_stats(scores)?;
    let auc = match auc(scores, labels) {
        Ok(a) => Some(a),
        Err(MetricsError::Undefined(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(MetricReport {
        n: scores.len(),
        excluded_count,
        bins,
        tau: policy.tau(),
        ece_equal_width: ece(scores, labels, ew)?,
        ece_quantile: ece(scores, labels, q)?,
        brier: brier(scores, labels)?,
        auc,
        accuracy: accuracy(scores, labels, policy)?,
        confidence_bias: confidence_bias(scores, labels, ew, policy)?,
        sce: signed_calibration_error(scores, labels)?,
        score_mean: stats.mean,
        score_std: stats.std,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveBin {
    pub bin: usize,
    pub mean_score: f64,
    pub positive_rate: f64,
    pub count: usize,
    /// Normal-approximation 95% half-width of `positive_rate`.
    pub ci_half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub kind: BinKind,
    pub bins: usize,
    /// Non-empty bins only, in bin order.
    pub points: Vec<CurveBin>,
}

pub fn calibration_curve(scores: &[f64], labels: &[u8], spec: BinningSpec) -> Result<CalibrationCurve> {
    assert_eq!(scores.len(), labels.len(), "scores and labels differ in length");
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    let assigned = bin_assign(scores, spec);
    let mut sum_r = vec![0.0f64; spec.bins];
    let mut sum_y = vec![0usize; spec.bins];
    let mut count = vec![0usize; spec.bins];
    for ((&r, &y), &b) in scores.iter().zip(labels).zip(&assigned) {
        sum_r[b] += r;
        sum_y[b] += usize::from(y);
        count[b] += 1;
    }
    let points = (0..spec.bins)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let k = count[b] as f64;
            let rate = sum_y[b] as f64 / k;
            CurveBin {
                bin: b,
                mean_score: sum_r[b] / k,
                positive_rate: rate,
                count: count[b],
                ci_half_width: 1.96 * (rate * (1.0 - rate) / k).sqrt(),
            }
        })
        .collect();
    Ok(CalibrationCurve {
        kind: spec.kind,
        bins: spec.bins,
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEntry {
    pub group: String,
    pub report: MetricReport,
    pub curve: CalibrationCurve,
}

/// SCE of `a` minus SCE of `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceDelta {
    pub a: String,
    pub b: String,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub column: String,
    pub groups: Vec<GroupEntry>,
    pub delta_sce: Vec<SceDelta>,
    pub notes: Vec<String>,
}

/// Per-group reports and quantile curves, plus Δ_SCE for every ordered pair.
/// Groups listed in `expected` without records are noted and skipped.
pub fn group_metrics(
    column: &str,
    records: &[ScoredRecord],
    expected: &[String],
    bins: usize,
    policy: ThresholdPolicy,
) -> Result<GroupReport> {
    let mut by_group: BTreeMap<&str, (Vec<f64>, Vec<u8>)> = BTreeMap::new();
    for r in records {
        let e = by_group.entry(r.group.as_str()).or_default();
        e.0.push(r.score);
        e.1.push(r.label);
    }
    let mut order: Vec<String> = expected.to_vec();
    for g in by_group.keys() {
        if !order.iter().any(|o| o == g) {
            order.push(g.to_string());
        }
    }

    let mut notes = Vec::new();
    let mut groups = Vec::new();
    for g in &order {
        let Some((scores, labels)) = by_group.get(g.as_str()) else {
            notes.push(format!("group {g} has no scored records; omitted"));
            continue;
        };
        let report = metric_report(scores, labels, bins, policy, 0)?;
        if report.auc.is_none() {
            notes.push(format!("group {g} has a single class; AUC not reported"));
        }
        groups.push(GroupEntry {
            group: g.clone(),
            report,
            curve: calibration_curve(scores, labels, BinningSpec::new(bins, BinKind::Quantile)?)?,
        });
    }
    let mut delta_sce = Vec::new();
    for a in &groups {
        for b in &groups {
            if a.group != b.group {
                delta_sce.push(SceDelta {
                    a: a.group.clone(),
                    b: b.group.clone(),
                    delta: a.report.sce - b.report.sce,
                });
            }
        }
    }
    Ok(GroupReport {
        column: column.to_string(),
        groups,
        delta_sce,
        notes,
    })
}
