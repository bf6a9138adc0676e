use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{SplitFractions, ThresholdSetting};
use super::{BenchError, Result};
use crate::encoding::Scheme;
use crate::metrics::{
    calibration_curve, group_metrics, metric_report, score_distribution_stats, BinKind, BinningSpec,
    CalibrationCurve, GroupReport, MetricReport, ScoreStats, HISTOGRAM_CELLS,
};
use crate::scoring::{read_scored_records, scored_records_csv, ScoredRecord, ThresholdPolicy};
use crate::tabular::LineageStep;

pub const REPORT_FILE: &str = "report.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CURVE_EQUAL_WIDTH_FILE: &str = "calibration_curve_equal_width.csv";
pub const CURVE_QUANTILE_FILE: &str = "calibration_curve_quantile.csv";
pub const HISTOGRAM_FILE: &str = "score_histogram.csv";
pub const GROUP_METRICS_FILE: &str = "group_metrics.csv";
pub const SCORED_RECORDS_FILE: &str = "scored_records.csv";
pub const RUN_STATS_FILE: &str = "run_stats.json";

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEcho {
    pub kind: String,
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth_spec_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leakage: Option<f64>,
}

/// The config fields that can change a result. File inputs appear as
/// content digests, so moving a file does not change the echo; paths for
/// outputs, caches and transport tuning are left out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub task_id: String,
    pub task_sha256: String,
    pub features: Vec<String>,
    pub data_sha256: Option<String>,
    pub codebook_sha256: String,
    pub model: ModelEcho,
    pub scheme: Scheme,
    pub bins: usize,
    pub threshold: ThresholdSetting,
    pub split: SplitFractions,
    pub subsample: Option<usize>,
    pub seed: u64,
    pub group_column: Option<String>,
    pub group_top_k: usize,
    pub top_k_logprobs: u32,
    pub max_extraction_failure_rate: f64,
}

impl ConfigEcho {
    pub fn digest(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config echo serializes"))
    }
}

/// What metric computation needs beyond the scored records themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSettings {
    pub bins: usize,
    pub tau: f64,
    /// Set when `tau` was chosen to maximize accuracy on the validation split.
    pub threshold_fitted_on_validation: bool,
    pub group_column: Option<String>,
    /// Group labels in reporting order.
    pub expected_groups: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RowCounts {
    /// Rows left after the population filter.
    pub population: usize,
    pub evaluated: usize,
    pub validation: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExtractionSummary {
    pub attempted: usize,
    pub scored: usize,
    pub failed: usize,
    pub failure_rate: f64,
    /// Requests that returned an error rather than a distribution.
    pub request_errors: usize,
    pub single_ordering: usize,
    pub single_digit: usize,
}

/// Everything derived from scored records: the contents of the metric files.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricArtifacts {
    pub metrics: Option<MetricReport>,
    pub curves: Vec<CalibrationCurve>,
    pub score_stats: Option<ScoreStats>,
    pub groups: Option<GroupReport>,
}

/// Timing and request accounting; kept out of the report so that reports
/// compare byte for byte across cached re-runs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunStats {
    pub wall_clock_secs: f64,
    pub requests: u64,
    pub request_errors: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    /// Requests that reached the model behind the cache.
    pub model_calls: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub tool: String,
    pub version: String,
    pub task_id: String,
    pub model_id: String,
    pub scheme: Scheme,
    pub config_digest: String,
    pub config: ConfigEcho,
    pub evaluation: EvaluationSettings,
    pub rows: RowCounts,
    pub extraction: ExtractionSummary,
    #[serde(flatten)]
    pub artifacts: MetricArtifacts,
    pub lineage: Vec<LineageStep>,
    pub scored_records_sha256: String,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub records: Vec<ScoredRecord>,
}

pub fn compute_artifacts(
    records: &[ScoredRecord],
    excluded: usize,
    settings: &EvaluationSettings,
) -> Result<MetricArtifacts> {
    if records.is_empty() {
        return Ok(MetricArtifacts::default());
    }
    let policy = ThresholdPolicy::new(settings.tau)?;
    let scores = ScoredRecord::scores(records);
    let labels = ScoredRecord::labels(records);
    let curves = [BinKind::EqualWidth, BinKind::Quantile]
        .into_iter()
        .map(|kind| calibration_curve(&scores, &labels, BinningSpec::new(settings.bins, kind)?))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let groups = match &settings.group_column {
        Some(col) => Some(group_metrics(col, records, &settings.expected_groups, settings.bins, policy)?),
        None => None,
    };
    Ok(MetricArtifacts {
        metrics: Some(metric_report(&scores, &labels, settings.bins, policy, excluded)?),
        curves,
        score_stats: Some(score_distribution_stats(&scores)?),
        groups,
    })
}

fn csv_error(e: csv::Error) -> BenchError {
    BenchError::Io(e.to_string())
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(header).map_err(csv_error)?;
    for row in rows {
        w.write_record(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn metric_row(m: &MetricReport) -> Vec<String> {
    vec![
        m.n.to_string(),
        m.ece_equal_width.to_string(),
        m.ece_quantile.to_string(),
        m.brier.to_string(),
        opt(m.auc),
        m.accuracy.to_string(),
        m.confidence_bias.to_string(),
        m.sce.to_string(),
        m.score_mean.to_string(),
        m.score_std.to_string(),
    ]
}

const METRIC_COLUMNS: [&str; 10] = [
    "n",
    "ece_equal_width",
    "ece_quantile",
    "brier",
    "auc",
    "accuracy",
    "confidence_bias",
    "sce",
    "score_mean",
    "score_std",
];

/// Writes the metric, curve and histogram CSVs, and the group table when
/// groups were evaluated. A stale group table from an earlier run is removed.
pub fn write_metric_files(dir: &Path, artifacts: &MetricArtifacts) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();

    let path = dir.join(METRICS_FILE);
    let mut rows = Vec::new();
    if let Some(m) = &artifacts.metrics {
        rows.push(vec!["bins".to_string(), m.bins.to_string()]);
        rows.push(vec!["tau".to_string(), m.tau.to_string()]);
        for (name, value) in METRIC_COLUMNS.iter().zip(metric_row(m)) {
            rows.push(vec![name.to_string(), value]);
        }
    }
    write_csv(&path, &["metric", "value"], rows)?;
    written.push(path);

    for (kind, file) in [(BinKind::EqualWidth, CURVE_EQUAL_WIDTH_FILE), (BinKind::Quantile, CURVE_QUANTILE_FILE)] {
        let path = dir.join(file);
        let rows = artifacts
            .curves
            .iter()
            .filter(|c| c.kind == kind)
            .flat_map(|c| &c.points)
            .map(|p| {
                vec![
                    p.bin.to_string(),
                    p.mean_score.to_string(),
                    p.positive_rate.to_string(),
                    p.count.to_string(),
                    p.ci_half_width.to_string(),
                ]
            })
            .collect();
        write_csv(&path, &["bin", "mean_score", "positive_rate", "count", "ci_half_width"], rows)?;
        written.push(path);
    }

    let path = dir.join(HISTOGRAM_FILE);
    let rows = artifacts
        .score_stats
        .iter()
        .flat_map(|s| s.histogram.iter().enumerate())
        .map(|(i, count)| {
            let width = HISTOGRAM_CELLS as f64;
            vec![
                i.to_string(),
                (i as f64 / width).to_string(),
                ((i + 1) as f64 / width).to_string(),
                count.to_string(),
            ]
        })
        .collect();
    write_csv(&path, &["cell", "lower", "upper", "count"], rows)?;
    written.push(path);

    let path = dir.join(GROUP_METRICS_FILE);
    match &artifacts.groups {
        Some(g) => {
            let rows = g
                .groups
                .iter()
                .map(|e| {
                    let mut row = vec![e.group.clone()];
                    row.extend(metric_row(&e.report));
                    row
                })
                .collect();
            let mut header = vec!["group"];
            header.extend(METRIC_COLUMNS);
            write_csv(&path, &header, rows)?;
            written.push(path);
        }
        None => {
            if path.exists() {
                std::fs::remove_file(&path)?;
            }
        }
    }
    Ok(written)
}

/// Writes the scored records, the metric files and `report.json`.
pub fn emit_report(report: &EvaluationReport, results_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(results_dir)?;
    let records_path = results_dir.join(SCORED_RECORDS_FILE);
    std::fs::write(&records_path, scored_records_csv(&report.records)?)?;
    let mut written = vec![records_path];
    written.extend(write_metric_files(results_dir, &report.artifacts)?);
    let report_path = results_dir.join(REPORT_FILE);
    let mut json = serde_json::to_vec_pretty(report)?;
    json.push(b'\n');
    std::fs::write(&report_path, json)?;
    written.push(report_path);
    Ok(written)
}

pub fn read_report(results_dir: &Path) -> Result<EvaluationReport> {
    let path = results_dir.join(REPORT_FILE);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| BenchError::Io(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Recomputes every metric file of a finished run from its scored records
/// and the evaluation settings in its report, writing them to `out_dir`.
pub fn reemit_from_records(results_dir: &Path, out_dir: &Path) -> Result<MetricArtifacts> {
    let report = read_report(results_dir)?;
    let records_path = results_dir.join(SCORED_RECORDS_FILE);
    let bytes = std::fs::read(&records_path)?;
    if sha256_hex(&bytes) != report.scored_records_sha256 {
        warn!("{} does not match the digest recorded in the report", records_path.display());
    }
    let records = read_scored_records(&records_path)?;
    let artifacts = compute_artifacts(&records, report.extraction.failed, &report.evaluation)?;
    std::fs::create_dir_all(out_dir)?;
    write_metric_files(out_dir, &artifacts)?;
    Ok(artifacts)
}
