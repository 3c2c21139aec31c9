mod args;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use chrono::{NaiveDate, Utc};
use clap::error::ErrorKind;
use clap::Parser;
use compass_core::clock::{Clock, ManualClock, SystemClock};
use compass_core::gateway::{Gateway, GatewayConfig, GatewayError, RequestLedger};
use compass_core::harvester::synthetic::SyntheticWeb;
use compass_core::harvester::{DirFetcher, Fetcher, HttpFetcher, HttpFetcherConfig};
use compass_core::pipeline::{
    read_corpus, run_pipeline, scrape, write_corpus, ArticleInput, FetcherFactory, PipelineConfig, PipelineError,
    RunSummary, TimeMode,
};
use compass_core::registry::{load_registry, shipped_registry, Config, ProviderKind, RegistryError};
use compass_core::report::{build_bundle, emit_bundle, ReportError};
use compass_core::service::{serve, Service, ServiceConfig};
use compass_core::store::{BatchError, BatchPolicy, StoreError};
use compass_core::{ModelSpec, NewspaperSource, RunParameters, RunStore};
use serde_json::json;
use tracing_subscriber::EnvFilter;

use args::{Cli, Command, CommonArgs, EvaluateArgs, MockRunArgs, ModelArgs, ReportArgs, RunRef, ScrapeArgs, ServeArgs};

/// File name of the request ledger under the output root. It is shared by
/// all runs so daily quotas hold across invocations.
const LEDGER_FILE: &str = "requests.jsonl";

#[derive(Debug)]
enum Failure {
    Usage(String),
    Config(String),
    Storage(String),
    Incomplete(Box<RunSummary>),
    /// The run stopped early, e.g. on an exhausted quota.
    Stopped(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Config(_) => 2,
            Failure::Storage(_) => 3,
            Failure::Incomplete(_) | Failure::Stopped(_) => 4,
        }
    }

    fn summary(&self) -> serde_json::Value {
        let (kind, message) = match self {
            Failure::Usage(m) => ("usage", m.clone()),
            Failure::Config(m) => ("config", m.clone()),
            Failure::Storage(m) => ("storage", m.clone()),
            Failure::Stopped(m) => ("incomplete", m.clone()),
            Failure::Incomplete(s) => {
                return json!({
                    "error": {
                        "kind": "incomplete",
                        "exit_code": self.exit_code(),
                        "message": format!("{} incomplete batches", s.incomplete_batches),
                    },
                    "run": s,
                })
            }
        };
        json!({ "error": { "kind": kind, "exit_code": self.exit_code(), "message": message } })
    }
}

impl From<RegistryError> for Failure {
    fn from(e: RegistryError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::UnknownRun(_) | StoreError::InvalidRunId(_) => Failure::Usage(e.to_string()),
            e => Failure::Storage(e.to_string()),
        }
    }
}

impl From<ReportError> for Failure {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Store(e) => e.into(),
            e => Failure::Storage(e.to_string()),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(m) => Failure::Config(m),
            PipelineError::Corpus { .. } => Failure::Config(e.to_string()),
            PipelineError::Store(e) => e.into(),
            PipelineError::Fatal {
                source: BatchError::Gateway(GatewayError::MissingCredentials { .. }),
                ..
            } => Failure::Config(e.to_string()),
            PipelineError::Fatal {
                source: BatchError::Gateway(GatewayError::Ledger(_)),
                ..
            } => Failure::Storage(e.to_string()),
            PipelineError::Fatal { .. } => Failure::Stopped(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn load_config(path: Option<&Path>) -> CliResult<Config> {
    Ok(match path {
        Some(p) => Config::load(p)?,
        None => Config::builtin(),
    })
}

fn load_sources(path: Option<&Path>) -> CliResult<Vec<NewspaperSource>> {
    Ok(match path {
        Some(p) => load_registry(p)?,
        None => shipped_registry(),
    })
}

/// Flag overrides on top of the config; an invalid combination is a usage
/// error since the config itself was already validated.
fn merge_params(config: &Config, apply: impl FnOnce(&mut RunParameters)) -> CliResult<RunParameters> {
    let mut p = config.params;
    apply(&mut p);
    p.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(p)
}

fn select_models(config: &Config, ids: &[String], fallback: &[&str]) -> CliResult<Vec<ModelSpec>> {
    let ids: Vec<String> = if ids.is_empty() {
        fallback.iter().map(|s| s.to_string()).collect()
    } else {
        ids.to_vec()
    };
    let mut specs = Vec::new();
    for id in &ids {
        let spec = config.model(id)?.clone();
        if !specs.iter().any(|s: &ModelSpec| s.id == spec.id) {
            specs.push(spec);
        }
    }
    Ok(specs)
}

fn open_ledger(out: &Path) -> CliResult<Arc<RequestLedger>> {
    std::fs::create_dir_all(out).map_err(|e| Failure::Storage(format!("{}: {e}", out.display())))?;
    let path = out.join(LEDGER_FILE);
    RequestLedger::open(&path)
        .map(Arc::new)
        .map_err(|e| Failure::Storage(format!("{}: {e}", path.display())))
}

fn gateway(clock: Arc<dyn Clock>, ledger: Arc<RequestLedger>, seed: Option<u64>) -> Arc<Gateway> {
    let config = GatewayConfig {
        mock_seed: seed.unwrap_or(0),
        ..GatewayConfig::default()
    };
    Arc::new(Gateway::new(config, clock, ledger))
}

fn dir_fetcher(dir: &Path) -> CliResult<Arc<dyn Fetcher>> {
    Ok(Arc::new(DirFetcher::open(dir).map_err(|e| Failure::Config(e.to_string()))?))
}

fn http_fetcher() -> CliResult<Arc<dyn Fetcher>> {
    Ok(Arc::new(
        HttpFetcher::new(HttpFetcherConfig::default()).map_err(|e| Failure::Config(format!("http client: {e}")))?,
    ))
}

fn same_every_day(fetcher: Arc<dyn Fetcher>) -> FetcherFactory {
    Arc::new(move |_| fetcher.clone())
}

fn today() -> NaiveDate {
    Utc::now().date_naive()
}

fn pipeline_config(
    params: RunParameters,
    models: Vec<ModelSpec>,
    sources: Vec<NewspaperSource>,
    common: &CommonArgs,
    m: &ModelArgs,
    time: TimeMode,
) -> PipelineConfig {
    PipelineConfig {
        params,
        models,
        sources,
        parallel: common.parallel,
        dry_run: m.dry_run,
        policy: BatchPolicy::default(),
        seed: m.seed,
        run_id: m.run_id.clone(),
        time,
    }
}

fn finish(summary: RunSummary) -> CliResult<serde_json::Value> {
    if summary.complete || summary.dry_run {
        Ok(serde_json::to_value(&summary).expect("summary serializes"))
    } else {
        Err(Failure::Incomplete(Box::new(summary)))
    }
}

async fn cmd_scrape(cli: &Cli, a: &ScrapeArgs) -> CliResult<serde_json::Value> {
    let config = load_config(cli.config.as_deref())?;
    let sources = load_sources(a.common.registry.as_deref())?;
    let mut params = merge_params(&config, |p| a.params.apply(p))?;
    params.days = 1;
    let fetcher = match &a.fixtures {
        Some(dir) => dir_fetcher(dir)?,
        None => http_fetcher()?,
    };
    let day = a.day.unwrap_or_else(today);
    let time = match a.fixtures {
        Some(_) => TimeMode::Simulated { start: day },
        None => TimeMode::Live(Arc::new(SystemClock)),
    };
    let result = scrape(&params, &sources, same_every_day(fetcher), &time, a.common.parallel).await;

    let path = a.corpus.clone().unwrap_or_else(|| a.common.out.join("corpus.jsonl"));
    let mut entries = if path.exists() { read_corpus(&path)? } else { Vec::new() };
    entries.retain(|e| e.batch_day != day);
    let added = result.entries.len();
    entries.extend(result.entries.into_iter().map(|mut e| {
        e.batch_day = day;
        e
    }));
    entries.sort_by(|x, y| (x.batch_day, &x.newspaper_id, x.rank).cmp(&(y.batch_day, &y.newspaper_id, y.rank)));
    write_corpus(&path, &entries).map_err(|e| Failure::Storage(format!("{}: {e}", path.display())))?;
    let discarded: Vec<_> = result
        .discarded
        .iter()
        .map(|(_, id, why)| json!({ "newspaper_id": id, "error": why }))
        .collect();
    Ok(json!({ "corpus": path, "day": day, "articles": added, "discarded": discarded }))
}

async fn cmd_evaluate(cli: &Cli, a: &EvaluateArgs) -> CliResult<serde_json::Value> {
    let config = load_config(cli.config.as_deref())?;
    let sources = load_sources(a.common.registry.as_deref())?;
    let params = merge_params(&config, |p| a.batch.apply(p))?;
    let default_models: Vec<&str> = config
        .models
        .iter()
        .filter(|m| m.provider != ProviderKind::Mock)
        .map(|m| m.id.as_str())
        .collect();
    let models = select_models(&config, &a.models.models, &default_models)?;

    let (input, time) = match (&a.corpus, &a.fixtures) {
        (Some(path), _) => (ArticleInput::Corpus(read_corpus(path)?), TimeMode::Live(Arc::new(SystemClock))),
        (None, Some(dir)) => (
            ArticleInput::Harvest(same_every_day(dir_fetcher(dir)?)),
            TimeMode::Simulated {
                start: a.start_date.unwrap_or_else(today),
            },
        ),
        (None, None) => (
            ArticleInput::Harvest(same_every_day(http_fetcher()?)),
            TimeMode::Live(Arc::new(SystemClock)),
        ),
    };
    let clock: Arc<dyn Clock> = match &time {
        TimeMode::Live(c) => c.clone(),
        TimeMode::Simulated { start } => Arc::new(ManualClock::at_midnight(*start)),
    };
    let ledger = open_ledger(&a.common.out)?;
    let cfg = pipeline_config(params, models, sources, &a.common, &a.models, time);
    let summary = run_pipeline(cfg, input, gateway(clock, ledger, a.models.seed), &a.common.out).await?;
    finish(summary)
}

async fn cmd_mock_run(cli: &Cli, a: &MockRunArgs) -> CliResult<serde_json::Value> {
    let config = load_config(cli.config.as_deref())?;
    let sources = load_sources(a.common.registry.as_deref())?;
    let params = merge_params(&config, |p| a.batch.apply(p))?;
    let models = select_models(&config, &a.models.models, &["mock-hash"])?;
    if let Some(m) = models.iter().find(|m| m.provider != ProviderKind::Mock) {
        return Err(Failure::Usage(format!("mock-run only accepts mock models, got {:?}", m.id)));
    }
    let seed = a.models.seed.unwrap_or(0);
    let input = ArticleInput::Harvest(Arc::new(move |day| Arc::new(SyntheticWeb::new(day, seed)) as Arc<dyn Fetcher>));
    let ledger = open_ledger(&a.common.out)?;
    let clock = Arc::new(ManualClock::at_midnight(a.start_date));
    let time = TimeMode::Simulated { start: a.start_date };
    let mut cfg = pipeline_config(params, models, sources, &a.common, &a.models, time);
    cfg.seed = Some(seed);
    let summary = run_pipeline(cfg, input, gateway(clock, ledger, Some(seed)), &a.common.out).await?;
    if !summary.dry_run {
        let store = RunStore::open(&a.common.out, &summary.run_id)?;
        emit_bundle(&store, &summary.run_dir.join("report"))?;
    }
    finish(summary)
}

fn cmd_analyze(r: &RunRef) -> CliResult<serde_json::Value> {
    let store = RunStore::open(&r.out, &r.run)?;
    let bundle = build_bundle(&store)?;
    Ok(serde_json::to_value(&bundle).expect("bundle serializes"))
}

fn cmd_report(a: &ReportArgs) -> CliResult<serde_json::Value> {
    let store = RunStore::open(&a.run.out, &a.run.run)?;
    let dest: PathBuf = a.dest.clone().unwrap_or_else(|| store.dir().join("report"));
    let bundle = emit_bundle(&store, &dest)?;
    let models: Vec<_> = bundle
        .models
        .iter()
        .map(|m| json!({ "model_id": m.model_id, "evaluations": m.evaluations }))
        .collect();
    Ok(json!({ "run_id": bundle.run_id, "report_dir": dest, "models": models }))
}

async fn cmd_serve(cli: &Cli, a: &ServeArgs) -> CliResult<serde_json::Value> {
    let config = load_config(cli.config.as_deref())?;
    let sources = load_sources(a.registry.as_deref())?;
    let params = merge_params(&config, |p| a.params.apply(p))?;
    let fetcher = match &a.fixtures {
        Some(dir) => dir_fetcher(dir)?,
        None => http_fetcher()?,
    };
    let clock: Arc<dyn Clock> = Arc::new(SystemClock);
    let ledger = open_ledger(&a.out)?;
    let mut cfg = ServiceConfig::new(a.out.clone(), params, config.models.clone(), sources);
    cfg.epoch = Duration::from_secs(a.epoch_hours.max(1) * 3600);
    cfg.ui_origin = a.ui_origin.clone();
    let svc = Arc::new(Service::new(cfg, fetcher, gateway(clock.clone(), ledger, Some(a.seed)), clock));
    serve(svc, a.addr)
        .await
        .map_err(|e| Failure::Config(format!("listening on {}: {e}", a.addr)))?;
    Ok(json!({ "stopped": true }))
}

async fn dispatch(cli: &Cli) -> CliResult<serde_json::Value> {
    match &cli.command {
        Command::Scrape(a) => cmd_scrape(cli, a).await,
        Command::Evaluate(a) => cmd_evaluate(cli, a).await,
        Command::Analyze(r) => cmd_analyze(r),
        Command::Report(a) => cmd_report(a),
        Command::Serve(a) => cmd_serve(cli, a).await,
        Command::MockRun(a) => cmd_mock_run(cli, a).await,
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let filter = EnvFilter::try_new(&cli.log).unwrap_or_else(|_| EnvFilter::new("info"));
    tracing_subscriber::fmt()
        .json()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();

    match dispatch(&cli).await {
        Ok(out) => {
            println!("{}", serde_json::to_string_pretty(&out).expect("json"));
            ExitCode::SUCCESS
        }
        Err(f) => {
            tracing::error!(exit_code = f.exit_code(), "command failed");
            println!("{}", serde_json::to_string_pretty(&f.summary()).expect("json"));
            ExitCode::from(f.exit_code())
        }
    }
}
