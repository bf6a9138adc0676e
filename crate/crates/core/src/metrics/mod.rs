//! Calibration and discrimination metrics over (score, label) pairs.

mod binning;
mod importance;
mod report;
mod scalar;

pub use binning::{bin_assign, BinKind, BinningSpec, DEFAULT_BINS};
pub use importance::permutation_feature_importance;
pub use report::{
    calibration_curve, group_metrics, metric_report, CalibrationCurve, CurveBin, GroupEntry,
    GroupReport, MetricReport, SceDelta,
};
pub use scalar::{
    accuracy, auc, brier, confidence_bias, ece, score_distribution_stats,
    signed_calibration_error, signed_calibration_error_binned, ScoreStats, HISTOGRAM_CELLS,
};

use thiserror::Error;

use crate::tabular::DataError;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("metric undefined: {0}")]
    Undefined(String),
    #[error("no records to evaluate")]
    Empty,
    #[error("invalid binning: {0}")]
    InvalidBinning(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;
