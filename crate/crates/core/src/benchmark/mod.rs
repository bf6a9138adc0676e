//! End-to-end benchmark runs: data, prompts, model, scores, metrics, files.

mod config;
mod emit;
mod run;

pub use config::{
    BenchmarkConfig, ModelSource, SplitFractions, ThresholdSetting, BUILTIN_SYNTH_ROWS,
    BUILTIN_SYNTH_SPEC,
};
pub use emit::{
    compute_artifacts, emit_report, read_report, reemit_from_records, write_metric_files, EvaluationReport,
    EvaluationSettings, ExtractionSummary, MetricArtifacts, ModelEcho, ConfigEcho, RowCounts,
    RunStats, CURVE_EQUAL_WIDTH_FILE, CURVE_QUANTILE_FILE, GROUP_METRICS_FILE, HISTOGRAM_FILE,
    METRICS_FILE, REPORT_FILE, RUN_STATS_FILE, SCORED_RECORDS_FILE,
};
pub use run::{run_benchmark, RunOutcome};

use thiserror::Error;

use crate::encoding::EncodeError;
use crate::metrics::MetricsError;
use crate::scoring::ScoreError;
use crate::synth::SynthError;
use crate::tabular::DataError;
use crate::transport::TransportError;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("capability error: {0}")]
    Capability(String),
    #[error("endpoint error: {0}")]
    Endpoint(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl BenchError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) | BenchError::Schema(_) => 2,
            BenchError::Capability(_) | BenchError::Endpoint(_) => 3,
            BenchError::Io(_) => 5,
        }
    }
}

impl From<std::io::Error> for BenchError {
    fn from(e: std::io::Error) -> Self {
        BenchError::Io(e.to_string())
    }
}

impl From<DataError> for BenchError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io(io) => BenchError::Io(io.to_string()),
            DataError::NoInput(_) => BenchError::Io(e.to_string()),
            DataError::Csv(ref c) if c.is_io_error() => BenchError::Io(e.to_string()),
            DataError::UnknownTask(_) | DataError::InvalidSplit(_) | DataError::Config(_) => {
                BenchError::Config(e.to_string())
            }
            _ => BenchError::Schema(e.to_string()),
        }
    }
}

impl From<EncodeError> for BenchError {
    fn from(e: EncodeError) -> Self {
        match e {
            EncodeError::Io(io) => BenchError::Io(io.to_string()),
            _ => BenchError::Schema(e.to_string()),
        }
    }
}

impl From<SynthError> for BenchError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Data(d) => d.into(),
            SynthError::Io(_) => BenchError::Io(e.to_string()),
            _ => BenchError::Config(e.to_string()),
        }
    }
}

impl From<ScoreError> for BenchError {
    fn from(e: ScoreError) -> Self {
        match e {
            ScoreError::Io(io) => BenchError::Io(io.to_string()),
            ScoreError::Csv(ref c) if c.is_io_error() => BenchError::Io(e.to_string()),
            _ => BenchError::Schema(e.to_string()),
        }
    }
}

impl From<MetricsError> for BenchError {
    fn from(e: MetricsError) -> Self {
        BenchError::Schema(e.to_string())
    }
}

impl From<TransportError> for BenchError {
    fn from(e: TransportError) -> Self {
        match e {
            TransportError::Capability(m) => BenchError::Capability(m),
            TransportError::Config(m) => BenchError::Config(m),
            TransportError::Cache(m) => BenchError::Io(m),
            other => BenchError::Endpoint(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for BenchError {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            BenchError::Io(e.to_string())
        } else {
            BenchError::Schema(e.to_string())
        }
    }
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;
