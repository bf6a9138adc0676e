use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BenchError, Result};
use crate::encoding::Scheme;
use crate::metrics::DEFAULT_BINS;
use crate::tabular::SplitSpec;
use crate::transport::{EndpointConfig, DEFAULT_TOP_K_LOGPROBS};

/// Name accepted in place of a spec path for the built-in census-shaped
/// synthetic population.
pub const BUILTIN_SYNTH_SPEC: &str = "acs-like";
pub const BUILTIN_SYNTH_ROWS: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSource {
    Endpoint {
        model_id: String,
        #[serde(flatten)]
        endpoint: EndpointConfig,
    },
    /// Scripted playback from a JSON fixture.
    Mock {
        fixture: PathBuf,
        #[serde(default = "default_mock_id")]
        model_id: String,
    },
    /// Oracle over a synthetic population; the population replaces `data_dir`.
    Oracle {
        #[serde(default = "default_spec")]
        spec: String,
        #[serde(default = "default_leakage")]
        leakage: f64,
    },
}

fn default_mock_id() -> String {
    "mock".into()
}
fn default_spec() -> String {
    BUILTIN_SYNTH_SPEC.into()
}
fn default_leakage() -> f64 {
    1.0
}

impl ModelSource {
    pub fn model_id(&self) -> &str {
        match self {
            ModelSource::Endpoint { model_id, .. } | ModelSource::Mock { model_id, .. } => model_id,
            ModelSource::Oracle { .. } => "oracle",
        }
    }

    pub fn max_in_flight(&self) -> usize {
        match self {
            ModelSource::Endpoint { endpoint, .. } => endpoint.max_in_flight,
            _ => 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ThresholdSetting {
    Fixed { tau: f64 },
    /// Maximize accuracy on the validation split.
    FitOnValidation,
}

impl Default for ThresholdSetting {
    fn default() -> Self {
        ThresholdSetting::Fixed { tau: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
        }
    }
}

/// Everything one benchmark run needs: one task, one scheme, one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    /// Bundled task id or path to a task TOML. Optional in oracle mode.
    #[serde(default)]
    pub task: Option<String>,
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    /// Directory of per-column codebook TOML files; bundled text otherwise.
    #[serde(default)]
    pub codebook_dir: Option<PathBuf>,
    pub model: ModelSource,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default)]
    pub threshold: ThresholdSetting,
    #[serde(default)]
    pub split: SplitFractions,
    /// Rows drawn from the evaluated split; all of them when absent.
    #[serde(default)]
    pub subsample: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub group_column: Option<String>,
    #[serde(default = "default_group_top_k")]
    pub group_top_k: usize,
    /// Ordered feature override for the task.
    #[serde(default)]
    pub features: Option<Vec<String>>,
    #[serde(default = "default_top_k")]
    pub top_k_logprobs: u32,
    pub results_dir: PathBuf,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    /// Runs with a larger share of unscorable rows are reported as failed.
    #[serde(default = "default_failure_limit")]
    pub max_extraction_failure_rate: f64,
}

fn default_scheme() -> Scheme {
    Scheme::MultipleChoice
}
fn default_bins() -> usize {
    DEFAULT_BINS
}
fn default_group_top_k() -> usize {
    5
}
fn default_top_k() -> u32 {
    DEFAULT_TOP_K_LOGPROBS
}
fn default_failure_limit() -> f64 {
    0.10
}

impl BenchmarkConfig {
    pub fn new(model: ModelSource, results_dir: impl Into<PathBuf>) -> Self {
        Self {
            task: None,
            data_dir: None,
            codebook_dir: None,
            model,
            scheme: default_scheme(),
            bins: default_bins(),
            threshold: ThresholdSetting::default(),
            split: SplitFractions::default(),
            subsample: None,
            seed: 0,
            group_column: None,
            group_top_k: default_group_top_k(),
            features: None,
            top_k_logprobs: default_top_k(),
            results_dir: results_dir.into(),
            cache_dir: None,
            max_extraction_failure_rate: default_failure_limit(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| BenchError::Config(format!("malformed config: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn split_spec(&self) -> Result<SplitSpec> {
        SplitSpec::new(self.split.train, self.split.validation, self.split.test, self.seed)
            .map_err(|e| BenchError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.bins < 1 {
            return bad("bins must be at least 1".into());
        }
        if let ThresholdSetting::Fixed { tau } = self.threshold {
            if !(0.0..=1.0).contains(&tau) {
                return bad(format!("tau {tau} is outside [0, 1]"));
            }
        }
        if self.threshold == ThresholdSetting::FitOnValidation && self.split.validation <= 0.0 {
            return bad("threshold fitting needs a non-empty validation split".into());
        }
        if self.split.test <= 0.0 {
            return bad("the test split must be non-empty".into());
        }
        self.split_spec()?;
        if self.subsample == Some(0) {
            return bad("subsample must be at least 1".into());
        }
        if self.group_top_k < 1 {
            return bad("group_top_k must be at least 1".into());
        }
        if self.top_k_logprobs < 2 {
            return bad("top_k_logprobs must be at least 2".into());
        }
        if !(0.0..=1.0).contains(&self.max_extraction_failure_rate) {
            return bad("max_extraction_failure_rate must be in [0, 1]".into());
        }
        match &self.model {
            ModelSource::Endpoint { model_id, endpoint } => {
                if model_id.trim().is_empty() {
                    return bad("model id is empty".into());
                }
                endpoint.validate().map_err(|e| BenchError::Config(e.to_string()))?;
            }
            ModelSource::Oracle { leakage, .. } => {
                if !(*leakage > 0.0 && *leakage <= 1.0) {
                    return bad(format!("oracle leakage {leakage} is outside (0, 1]"));
                }
            }
            ModelSource::Mock { .. } => {}
        }
        let needs_data = !matches!(self.model, ModelSource::Oracle { .. });
        if needs_data && self.task.is_none() {
            return bad("a task is required".into());
        }
        if needs_data && self.data_dir.is_none() {
            return bad("a data directory is required unless the oracle model is selected".into());
        }
        Ok(())
    }
}
