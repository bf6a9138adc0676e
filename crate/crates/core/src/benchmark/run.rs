use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use log::{info, warn};
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{BenchmarkConfig, ModelSource, ThresholdSetting, BUILTIN_SYNTH_ROWS, BUILTIN_SYNTH_SPEC};
use super::emit::{
    compute_artifacts, emit_report, sha256_hex, ConfigEcho, EvaluationReport, EvaluationSettings,
    ExtractionSummary, ModelEcho, RowCounts, RunStats, RUN_STATS_FILE,
};
use super::{BenchError, Result};
use crate::encoding::{
    build_multiple_choice_prompt, build_numeric_prompt, ChoiceOrdering, CodebookConfig, ColumnToText,
    PromptBundle, Scheme,
};
use crate::scoring::{
    fit_threshold, mc_score, numeric_score, numeric_second_pass_prompt, scored_records_csv, top_digit,
    Extraction, ScoreError, ScoreFlag, ScoredRecord, ThresholdPolicy,
};
use crate::synth::{generate_population, oracle_probabilities, SyntheticSpec};
use crate::tabular::{
    acs_schema, apply_population_filter, binarize_target, group_values, load_person_csv, split_dataset,
    subsample, Group, TabularDataset, TaskDefinition,
};
use crate::transport::{
    complete_all, CachedModel, CompletionModel, CompletionRequest, HttpCompletionModel, OracleModel,
    ScriptedModel, TokenDistribution, TransportError,
};

/// A finished run. Runs whose extraction failure rate exceeds the configured
/// limit still produce every file but report a nonzero exit status.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: EvaluationReport,
    pub stats: RunStats,
    pub files: Vec<PathBuf>,
    pub excess_failures: bool,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.excess_failures {
            4
        } else {
            0
        }
    }
}

/// A split ready to be scored.
struct Slice {
    data: TabularDataset,
    labels: Vec<u8>,
    groups: Vec<String>,
}

struct Prepared {
    task: TaskDefinition,
    codebook: CodebookConfig,
    echo: ConfigEcho,
    population_rows: usize,
    evaluated: Slice,
    validation: Option<Slice>,
    expected_groups: Vec<String>,
    synthetic: Option<SyntheticSpec>,
    notes: Vec<String>,
}

fn check_results_dir(dir: &Path) -> Result<()> {
    let io = |e: std::io::Error| BenchError::Io(format!("results directory {} is not writable: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    let probe = dir.join(".riskbench-write-probe");
    std::fs::write(&probe, b"").map_err(io)?;
    std::fs::remove_file(&probe).map_err(io)?;
    Ok(())
}

fn json_digest<T: Serialize>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("value serializes"))
}

fn dataset_digest(data: &TabularDataset) -> String {
    let mut h = Sha256::new();
    for c in data.schema() {
        h.update(c.name.as_bytes());
        h.update([0u8]);
    }
    let width = data.schema().len();
    let mut buf = Vec::with_capacity(8 * (width + 1));
    for r in 0..data.len() {
        buf.clear();
        buf.extend_from_slice(&data.row_id(r).to_le_bytes());
        for c in 0..width {
            let bits = data.value(r, c).as_f64().map_or(u64::MAX, f64::to_bits);
            buf.extend_from_slice(&bits.to_le_bytes());
        }
        h.update(&buf);
    }
    hex::encode(h.finalize())
}

fn codebook_digest(codebook: &CodebookConfig, task: &TaskDefinition) -> Result<String> {
    let used: Vec<&ColumnToText> = task
        .feature_columns
        .iter()
        .map(|f| codebook.mapping(f))
        .collect::<std::result::Result<_, _>>()?;
    Ok(json_digest(&(&codebook.population_preamble, used)))
}

fn load_synthetic_spec(name: &str, seed: u64) -> Result<SyntheticSpec> {
    if name == BUILTIN_SYNTH_SPEC {
        return Ok(SyntheticSpec::acs_like(BUILTIN_SYNTH_ROWS, seed));
    }
    let path = Path::new(name);
    if !path.is_file() {
        return Err(BenchError::Config(format!(
            "oracle spec `{name}` is neither `{BUILTIN_SYNTH_SPEC}` nor a readable file"
        )));
    }
    Ok(SyntheticSpec::from_file(path)?)
}

fn group_label(g: Group) -> String {
    match g {
        Group::Code(c) => c.to_string(),
        Group::Other => "other".into(),
    }
}

fn slice(
    data: TabularDataset,
    task: &TaskDefinition,
    codebook: &CodebookConfig,
    group: Option<(&str, usize)>,
) -> Result<(Slice, Vec<String>)> {
    codebook.validate_data(task, &data)?;
    let labels = binarize_target(&data, task)?;
    let (groups, expected) = match group {
        Some((col, top_k)) => {
            let g = group_values(&data, col, top_k)?;
            let mut expected: Vec<String> = g.categories.iter().map(|c| c.to_string()).collect();
            if g.membership.contains(&Group::Other) {
                expected.push("other".into());
            }
            (g.membership.into_iter().map(group_label).collect(), expected)
        }
        None => (vec![String::new(); data.len()], Vec::new()),
    };
    Ok((Slice { data, labels, groups }, expected))
}

fn prepare(config: &BenchmarkConfig) -> Result<Prepared> {
    let mut notes = Vec::new();
    let codebook = match &config.codebook_dir {
        Some(dir) => CodebookConfig::from_dir(dir)?,
        None => CodebookConfig::bundled(),
    };

    let synthetic = match &config.model {
        ModelSource::Oracle { spec, .. } => Some(load_synthetic_spec(spec, config.seed)?),
        _ => None,
    };
    let mut task = match (&synthetic, &config.task) {
        (Some(spec), requested) => {
            if let Some(t) = requested {
                warn!("task `{t}` ignored: the oracle model evaluates the synthetic task");
                notes.push(format!("task `{t}` ignored in oracle mode"));
            }
            spec.task()
        }
        (None, Some(t)) => TaskDefinition::resolve(t)?,
        (None, None) => return Err(BenchError::Config("a task is required".into())),
    };
    if let Some(features) = &config.features {
        task = task.with_features(features.clone())?;
    }
    codebook.validate_task(&task)?;

    let model = match &config.model {
        ModelSource::Endpoint { model_id, endpoint } => ModelEcho {
            kind: "endpoint".into(),
            model_id: model_id.clone(),
            base_url: Some(endpoint.base_url.clone()),
            fixture_sha256: None,
            synth_spec_sha256: None,
            leakage: None,
        },
        ModelSource::Mock { fixture, model_id } => {
            let bytes = std::fs::read(fixture)
                .map_err(|e| BenchError::Io(format!("cannot read mock fixture {}: {e}", fixture.display())))?;
            ModelEcho {
                kind: "mock".into(),
                model_id: model_id.clone(),
                base_url: None,
                fixture_sha256: Some(sha256_hex(&bytes)),
                synth_spec_sha256: None,
                leakage: None,
            }
        }
        ModelSource::Oracle { leakage, .. } => ModelEcho {
            kind: "oracle".into(),
            model_id: config.model.model_id().into(),
            base_url: None,
            fixture_sha256: None,
            synth_spec_sha256: synthetic.as_ref().map(json_digest),
            leakage: Some(*leakage),
        },
    };

    let data = match (&synthetic, &config.data_dir) {
        (Some(spec), _) => generate_population(spec)?.dataset,
        (None, Some(dir)) => {
            let mut columns = task.required_columns();
            if let Some(g) = &config.group_column {
                if !columns.contains(g) {
                    columns.push(g.clone());
                }
            }
            load_person_csv(dir, &acs_schema(&columns))?
        }
        (None, None) => return Err(BenchError::Config("a data directory is required".into())),
    };
    if let Some(g) = &config.group_column {
        data.require_column(g)?;
    }
    let data_sha256 = dataset_digest(&data);

    let filtered = apply_population_filter(&data, &task)?;
    let population_rows = filtered.len();
    let (_, validation, test) = split_dataset(&filtered, &config.split_spec()?)?;
    let draw = |part: TabularDataset, name: &str, notes: &mut Vec<String>| -> Result<TabularDataset> {
        match config.subsample {
            Some(n) if n < part.len() => Ok(subsample(&part, n, config.seed)?),
            Some(n) => {
                if n > part.len() {
                    notes.push(format!("{name} split has {} rows, fewer than the requested {n}; all used", part.len()));
                }
                Ok(part)
            }
            None => Ok(part),
        }
    };
    let evaluated = draw(test, "test", &mut notes)?;
    if evaluated.is_empty() {
        return Err(BenchError::Schema("the evaluation split has no rows".into()));
    }
    let group = config.group_column.as_deref().map(|c| (c, config.group_top_k));
    let (evaluated, expected_groups) = slice(evaluated, &task, &codebook, group)?;
    let validation = match config.threshold {
        ThresholdSetting::FitOnValidation => {
            let v = draw(validation, "validation", &mut notes)?;
            if v.is_empty() {
                return Err(BenchError::Schema("the validation split has no rows".into()));
            }
            Some(slice(v, &task, &codebook, None)?.0)
        }
        ThresholdSetting::Fixed { .. } => None,
    };

    let echo = ConfigEcho {
        task_id: task.task_id.clone(),
        task_sha256: json_digest(&task),
        features: task.feature_columns.clone(),
        data_sha256: Some(data_sha256),
        codebook_sha256: codebook_digest(&codebook, &task)?,
        model,
        scheme: config.scheme,
        bins: config.bins,
        threshold: config.threshold,
        split: config.split,
        subsample: config.subsample,
        seed: config.seed,
        group_column: config.group_column.clone(),
        group_top_k: config.group_top_k,
        top_k_logprobs: config.top_k_logprobs,
        max_extraction_failure_rate: config.max_extraction_failure_rate,
    };
    Ok(Prepared {
        task,
        codebook,
        echo,
        population_rows,
        evaluated,
        validation,
        expected_groups,
        synthetic,
        notes,
    })
}

/// Counts calls that reach the wrapped model.
struct Counted<M> {
    inner: M,
    calls: AtomicU64,
}

impl<M: CompletionModel> CompletionModel for Counted<M> {
    fn complete(&self, request: &CompletionRequest) -> std::result::Result<Vec<TokenDistribution>, TransportError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.complete(request)
    }
}

type BaseModel = Counted<Box<dyn CompletionModel>>;

enum Runner {
    Direct(BaseModel),
    Cached(CachedModel<BaseModel>),
}

impl Runner {
    fn model(&self) -> &dyn CompletionModel {
        match self {
            Runner::Direct(m) => m,
            Runner::Cached(c) => c,
        }
    }

    fn fill_stats(&self, stats: &mut RunStats) {
        let base = match self {
            Runner::Direct(m) => m,
            Runner::Cached(c) => {
                stats.cache_hits = c.hits();
                stats.cache_misses = c.misses();
                c.inner()
            }
        };
        stats.model_calls = base.calls.load(Ordering::Relaxed);
    }
}

fn build_runner(config: &BenchmarkConfig, prepared: &Prepared) -> Result<Runner> {
    let base: Box<dyn CompletionModel> = match &config.model {
        ModelSource::Endpoint { endpoint, .. } => Box::new(HttpCompletionModel::new(endpoint.clone())?),
        ModelSource::Mock { fixture, .. } => Box::new(
            ScriptedModel::from_json_file(fixture).map_err(|e| BenchError::Config(format!("mock fixture: {e}")))?,
        ),
        ModelSource::Oracle { leakage, .. } => {
            let spec = prepared.synthetic.as_ref().expect("oracle mode has a synthetic spec");
            let visible = &prepared.task.feature_columns;
            let mut probs: HashMap<u64, f64> = oracle_probabilities(spec, &prepared.evaluated.data, visible)?;
            if let Some(v) = &prepared.validation {
                probs.extend(oracle_probabilities(spec, &v.data, visible)?);
            }
            Box::new(OracleModel::from_map(
                prepared.task.positive_choice.clone(),
                prepared.task.negative_choice.clone(),
                *leakage,
                probs,
            )?)
        }
    };
    let counted = Counted {
        inner: base,
        calls: AtomicU64::new(0),
    };
    Ok(match &config.cache_dir {
        Some(dir) => Runner::Cached(CachedModel::new(counted, dir)?),
        None => Runner::Direct(counted),
    })
}

struct Scorer<'a> {
    config: &'a BenchmarkConfig,
    model: &'a dyn CompletionModel,
    task: &'a TaskDefinition,
    codebook: &'a CodebookConfig,
    stats: RunStats,
}

impl Scorer<'_> {
    fn request(&self, prompt: String, row_id: u64) -> CompletionRequest {
        let mut r = CompletionRequest::new(self.config.model.model_id(), prompt).for_row(row_id);
        r.top_k_logprobs = self.config.top_k_logprobs;
        r
    }

    /// First-position distribution per request, `None` where the request
    /// failed. A fatal error aborts the run.
    fn complete(&mut self, requests: &[CompletionRequest]) -> Result<Vec<Option<TokenDistribution>>> {
        let results = complete_all(self.model, requests, self.config.model.max_in_flight());
        self.stats.requests += requests.len() as u64;
        if let Some(e) = results.iter().find_map(|r| r.as_ref().err().filter(|e| e.is_fatal())) {
            return Err(match e {
                TransportError::Capability(m) => BenchError::Capability(m.clone()),
                TransportError::Config(m) => BenchError::Config(m.clone()),
                other => BenchError::Endpoint(other.to_string()),
            });
        }
        let mut out = Vec::with_capacity(results.len());
        for (req, r) in requests.iter().zip(results) {
            match r {
                Ok(d) => out.push(d.into_iter().next()),
                Err(e) => {
                    if self.stats.request_errors < 5 {
                        warn!("row {:?}: {e}", req.row_id);
                    }
                    self.stats.request_errors += 1;
                    out.push(None);
                }
            }
        }
        Ok(out)
    }

    fn extract_all(&mut self, data: &TabularDataset) -> Result<Vec<std::result::Result<Extraction, ScoreError>>> {
        let rows = 0..data.len();
        match self.config.scheme {
            Scheme::MultipleChoice => {
                let bundles: Vec<Vec<PromptBundle>> = rows
                    .map(|r| {
                        ChoiceOrdering::BOTH
                            .iter()
                            .map(|&o| build_multiple_choice_prompt(data.row(r), self.task, self.codebook, o))
                            .collect::<std::result::Result<Vec<_>, _>>()
                    })
                    .collect::<std::result::Result<_, _>>()?;
                let requests: Vec<CompletionRequest> = bundles
                    .iter()
                    .enumerate()
                    .flat_map(|(r, bs)| bs.iter().map(move |b| (r, b)))
                    .map(|(r, b)| self.request(b.text.clone(), data.row_id(r)))
                    .collect();
                let dists = self.complete(&requests)?;
                Ok(bundles
                    .iter()
                    .enumerate()
                    .map(|(r, bs)| {
                        let k = bs.len();
                        let pairs: Vec<(Option<&TokenDistribution>, &PromptBundle)> =
                            (0..k).map(|j| (dists[r * k + j].as_ref(), &bs[j])).collect();
                        mc_score(&pairs)
                    })
                    .collect())
            }
            Scheme::Numeric => {
                let bundles: Vec<PromptBundle> = rows
                    .map(|r| build_numeric_prompt(data.row(r), self.task, self.codebook))
                    .collect::<std::result::Result<_, _>>()?;
                let first_requests: Vec<CompletionRequest> = bundles
                    .iter()
                    .enumerate()
                    .map(|(r, b)| self.request(b.text.clone(), data.row_id(r)))
                    .collect();
                let first = self.complete(&first_requests)?;
                let second_rows: Vec<(usize, u8)> = first
                    .iter()
                    .enumerate()
                    .filter_map(|(r, d)| d.as_ref().and_then(top_digit).map(|d1| (r, d1)))
                    .collect();
                let second_requests: Vec<CompletionRequest> = second_rows
                    .iter()
                    .map(|&(r, d1)| self.request(numeric_second_pass_prompt(&bundles[r], d1), data.row_id(r)))
                    .collect();
                let mut second: Vec<Option<TokenDistribution>> = vec![None; bundles.len()];
                for ((r, _), d) in second_rows.iter().zip(self.complete(&second_requests)?) {
                    second[*r] = d;
                }
                Ok(bundles
                    .iter()
                    .enumerate()
                    .map(|(r, b)| match &first[r] {
                        Some(d) => numeric_score(d, second[r].as_ref(), b),
                        None => Err(ScoreError::NoDigit),
                    })
                    .collect())
            }
        }
    }

    fn score(&mut self, slice: &Slice) -> Result<(Vec<ScoredRecord>, ExtractionSummary)> {
        let errors_before = self.stats.request_errors;
        let extractions = self.extract_all(&slice.data)?;
        let mut records = Vec::with_capacity(extractions.len());
        let mut summary = ExtractionSummary {
            attempted: extractions.len(),
            request_errors: (self.stats.request_errors - errors_before) as usize,
            ..Default::default()
        };
        for (r, ex) in extractions.into_iter().enumerate() {
            match ex {
                Ok(ex) => {
                    summary.single_ordering += ex.flags.contains(&ScoreFlag::SingleOrdering) as usize;
                    summary.single_digit += ex.flags.contains(&ScoreFlag::SingleDigit) as usize;
                    records.push(ScoredRecord {
                        row_id: slice.data.row_id(r),
                        score: ex.score,
                        label: slice.labels[r],
                        group: slice.groups[r].clone(),
                        scheme: self.config.scheme,
                        flags: ex.flags,
                    });
                }
                Err(ScoreError::NoChoiceTokens | ScoreError::NoDigit | ScoreError::AllOrderingsFailed) => {
                    summary.failed += 1;
                }
                Err(e) => return Err(e.into()),
            }
        }
        summary.scored = records.len();
        summary.failure_rate = if summary.attempted == 0 {
            0.0
        } else {
            summary.failed as f64 / summary.attempted as f64
        };
        Ok((records, summary))
    }
}

/// Runs one (task, scheme, model) benchmark and writes its files under
/// `config.results_dir`. Nothing is sent to a model until the config, the
/// results directory, the data and the codebook have all been checked.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<RunOutcome> {
    let started = Instant::now();
    config.validate()?;
    check_results_dir(&config.results_dir)?;
    let prepared = prepare(config)?;
    info!(
        "{}: {} rows after filtering, {} to evaluate",
        prepared.task.task_id,
        prepared.population_rows,
        prepared.evaluated.data.len()
    );
    let runner = build_runner(config, &prepared)?;
    let mut scorer = Scorer {
        config,
        model: runner.model(),
        task: &prepared.task,
        codebook: &prepared.codebook,
        stats: RunStats::default(),
    };
    let mut notes = prepared.notes.clone();

    let (tau, fitted) = match (config.threshold, &prepared.validation) {
        (ThresholdSetting::Fixed { tau }, _) => (tau, false),
        (ThresholdSetting::FitOnValidation, Some(v)) => {
            let (records, summary) = scorer.score(v)?;
            if summary.failed > 0 {
                notes.push(format!("{} validation rows could not be scored", summary.failed));
            }
            let policy = fit_threshold(&ScoredRecord::scores(&records), &ScoredRecord::labels(&records))?;
            notes.push(format!(
                "accuracy and confidence bias use tau = {} fitted on {} validation rows",
                policy.tau(),
                records.len()
            ));
            (policy.tau(), true)
        }
        (ThresholdSetting::FitOnValidation, None) => unreachable!("validation slice prepared when fitting"),
    };
    ThresholdPolicy::new(tau)?;

    let (records, extraction) = scorer.score(&prepared.evaluated)?;
    let mut stats = scorer.stats;
    let excess_failures = extraction.failure_rate > config.max_extraction_failure_rate;
    if excess_failures {
        notes.push(format!(
            "extraction failed for {} of {} rows, above the {} limit",
            extraction.failed, extraction.attempted, config.max_extraction_failure_rate
        ));
    }
    if records.is_empty() {
        notes.push("no rows were scored; metrics omitted".into());
    }
    if config.group_column.is_none() {
        notes.push("no group column configured; group metrics omitted".into());
    }

    let evaluation = EvaluationSettings {
        bins: config.bins,
        tau,
        threshold_fitted_on_validation: fitted,
        group_column: config.group_column.clone(),
        expected_groups: prepared.expected_groups.clone(),
    };
    let artifacts = compute_artifacts(&records, extraction.failed, &evaluation)?;
    if let Some(g) = &artifacts.groups {
        notes.extend(g.notes.iter().cloned());
    }
    let report = EvaluationReport {
        tool: "riskbench".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        task_id: prepared.task.task_id.clone(),
        model_id: config.model.model_id().into(),
        scheme: config.scheme,
        config_digest: prepared.echo.digest(),
        config: prepared.echo.clone(),
        evaluation,
        rows: RowCounts {
            population: prepared.population_rows,
            evaluated: prepared.evaluated.data.len(),
            validation: prepared.validation.as_ref().map_or(0, |v| v.data.len()),
        },
        extraction,
        artifacts,
        lineage: prepared.evaluated.data.lineage().to_vec(),
        scored_records_sha256: sha256_hex(&scored_records_csv(&records)?),
        notes,
        records,
    };
    let mut files = emit_report(&report, &config.results_dir)?;

    runner.fill_stats(&mut stats);
    stats.wall_clock_secs = started.elapsed().as_secs_f64();
    let stats_path = config.results_dir.join(RUN_STATS_FILE);
    std::fs::write(&stats_path, serde_json::to_vec_pretty(&stats)?)?;
    files.push(stats_path);
    info!(
        "{} rows scored, {} failed, {} requests ({} reached the model) in {:.1}s",
        report.extraction.scored, report.extraction.failed, stats.requests, stats.model_calls, stats.wall_clock_secs
    );
    Ok(RunOutcome {
        report,
        stats,
        files,
        excess_failures,
    })
}
