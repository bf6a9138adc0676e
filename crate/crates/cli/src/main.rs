use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{error, info, warn};
use riskbench::benchmark::{
    reemit_from_records, run_benchmark, BenchError, BenchmarkConfig, ModelSource, ThresholdSetting,
    BUILTIN_SYNTH_SPEC,
};
use riskbench::encoding::Scheme;
use riskbench::transport::EndpointConfig;

#[derive(Parser, Debug)]
#[command(name = "riskbench", version, about = "Evaluate language-model risk scores on tabular prediction tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Score one task with one model and write the report files.
    Run(RunArgs),
    /// Recompute the metric files of a finished run from its scored records.
    Evaluate {
        /// Directory holding report.json and scored_records.csv.
        results_dir: PathBuf,
        /// Where to write the metric files; defaults to the results directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SchemeArg {
    Mc,
    Numeric,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Mc => Scheme::MultipleChoice,
            SchemeArg::Numeric => Scheme::Numeric,
        }
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML config file; command-line flags take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Bundled task id (ACSIncome, ...) or path to a task TOML.
    #[arg(long)]
    task: Option<String>,
    /// PUMS person CSV file or a directory of them.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Directory of per-column codebook TOML files.
    #[arg(long)]
    codebook_dir: Option<PathBuf>,
    /// Model id sent to the endpoint or recorded for a mock.
    #[arg(long)]
    model: Option<String>,
    /// Base URL of an OpenAI-style completions API; the key is read from RISKBENCH_API_KEY.
    #[arg(long, conflicts_with_all = ["mock", "oracle"])]
    endpoint: Option<String>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    /// Number of calibration bins.
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long, conflicts_with = "fit_threshold")]
    tau: Option<f64>,
    /// Choose the threshold maximizing validation accuracy.
    #[arg(long)]
    fit_threshold: bool,
    #[arg(long)]
    subsample: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Column for per-group metrics; `none` disables them.
    #[arg(long)]
    group_col: Option<String>,
    #[arg(long)]
    group_top_k: Option<usize>,
    /// Ordered feature codes replacing the task's feature list.
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<String>>,
    #[arg(long)]
    results_dir: Option<PathBuf>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Scripted-response fixture standing in for an endpoint.
    #[arg(long, conflicts_with = "oracle")]
    mock: Option<PathBuf>,
    /// Synthetic spec (`acs-like` or a TOML path) answered by its oracle model.
    #[arg(long)]
    oracle: Option<String>,
    /// Share of the true log-odds the oracle reports.
    #[arg(long)]
    leakage: Option<f64>,
}

impl RunArgs {
    fn to_config(&self) -> anyhow::Result<BenchmarkConfig> {
        let mut config = match &self.config {
            Some(path) => BenchmarkConfig::from_file(path)?,
            None => {
                let results_dir = self.results_dir.clone().context("--results-dir is required without --config")?;
                BenchmarkConfig::new(self.model_source(None)?, results_dir)
            }
        };
        if self.config.is_some() {
            config.model = self.model_source(Some(config.model))?;
        }
        macro_rules! set {
            ($field:ident, $value:expr) => {
                if let Some(v) = $value {
                    config.$field = v;
                }
            };
        }
        set!(task, self.task.clone().map(Some));
        set!(data_dir, self.data_dir.clone().map(Some));
        set!(codebook_dir, self.codebook_dir.clone().map(Some));
        set!(scheme, self.scheme.map(Scheme::from));
        set!(bins, self.bins);
        set!(threshold, self.tau.map(|tau| ThresholdSetting::Fixed { tau }));
        if self.fit_threshold {
            config.threshold = ThresholdSetting::FitOnValidation;
        }
        set!(subsample, self.subsample.map(Some));
        set!(seed, self.seed);
        set!(
            group_column,
            self.group_col
                .clone()
                .map(|g| if g.eq_ignore_ascii_case("none") { None } else { Some(g) })
        );
        set!(group_top_k, self.group_top_k);
        set!(features, self.features.clone().map(Some));
        set!(results_dir, self.results_dir.clone());
        set!(cache_dir, self.cache_dir.clone().map(Some));
        Ok(config)
    }

    /// Model selection from flags, layered over the config file's choice.
    fn model_source(&self, base: Option<ModelSource>) -> anyhow::Result<ModelSource> {
        if let Some(url) = &self.endpoint {
            let (model_id, mut endpoint) = match base {
                Some(ModelSource::Endpoint { model_id, endpoint }) => (Some(model_id), endpoint),
                _ => (None, EndpointConfig::new(url.clone())),
            };
            endpoint.base_url = url.clone();
            let model_id = self.model.clone().or(model_id).context("--endpoint needs --model")?;
            return Ok(ModelSource::Endpoint { model_id, endpoint });
        }
        if let Some(fixture) = &self.mock {
            let model_id = self.model.clone().unwrap_or_else(|| "mock".into());
            return Ok(ModelSource::Mock { fixture: fixture.clone(), model_id });
        }
        if let Some(spec) = &self.oracle {
            let leakage = match (&base, self.leakage) {
                (_, Some(l)) => l,
                (Some(ModelSource::Oracle { leakage, .. }), None) => *leakage,
                _ => 1.0,
            };
            return Ok(ModelSource::Oracle { spec: spec.clone(), leakage });
        }
        match base {
            Some(ModelSource::Endpoint { endpoint, model_id }) => Ok(ModelSource::Endpoint {
                model_id: self.model.clone().unwrap_or(model_id),
                endpoint,
            }),
            Some(ModelSource::Mock { fixture, model_id }) => Ok(ModelSource::Mock {
                fixture,
                model_id: self.model.clone().unwrap_or(model_id),
            }),
            Some(ModelSource::Oracle { spec, leakage }) => Ok(ModelSource::Oracle {
                spec,
                leakage: self.leakage.unwrap_or(leakage),
            }),
            None => bail!("choose a model with --endpoint, --mock or --oracle (e.g. --oracle {BUILTIN_SYNTH_SPEC})"),
        }
    }
}

fn run(args: &RunArgs) -> u8 {
    let config = match args.to_config() {
        Ok(c) => c,
        Err(e) => {
            error!("{e:#}");
            return if e.downcast_ref::<BenchError>().is_some_and(|b| b.exit_code() == 5) { 5 } else { 2 };
        }
    };
    match run_benchmark(&config) {
        Ok(outcome) => {
            let r = &outcome.report;
            if let Some(m) = &r.artifacts.metrics {
                let auc = m.auc.map_or("n/a".to_string(), |a| format!("{a:.4}"));
                println!(
                    "{} {} {}: n={} ece={:.4} brier={:.4} auc={auc} acc={:.4}",
                    r.task_id,
                    r.model_id,
                    r.scheme.as_str(),
                    m.n,
                    m.ece_equal_width,
                    m.brier,
                    m.accuracy
                );
            }
            for note in &r.notes {
                info!("{note}");
            }
            if outcome.excess_failures {
                warn!(
                    "{} of {} rows could not be scored ({:.1}%)",
                    r.extraction.failed,
                    r.extraction.attempted,
                    100.0 * r.extraction.failure_rate
                );
            }
            println!("results written to {}", config.results_dir.display());
            outcome.exit_code() as u8
        }
        Err(e) => {
            error!("{e}");
            e.exit_code() as u8
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Run(args) => run(args),
        Command::Evaluate { results_dir, out_dir } => {
            let out = out_dir.as_ref().unwrap_or(results_dir);
            match reemit_from_records(results_dir, out) {
                Ok(_) => {
                    println!("metric files written to {}", out.display());
                    0
                }
                Err(e) => {
                    error!("{e}");
                    e.exit_code() as u8
                }
            }
        }
    };
    ExitCode::from(code)
}
