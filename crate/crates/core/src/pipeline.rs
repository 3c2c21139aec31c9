//! The daily loop: for every day and newspaper, harvest a pool of articles,
//! collect a batch per model and append the results to the run store.
//!
//! Newspapers are processed by a bounded worker pool. Results of one day are
//! appended in registry order once every worker has finished, so the store
//! layout does not depend on scheduling.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, NaiveDate, Utc};
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tokio::sync::Semaphore;
use tokio::task::JoinSet;

use crate::clock::{midnight, Clock, ManualClock};
use crate::gateway::Gateway;
use crate::harvester::{harvest_newspaper, ArticleRecord, Fetcher};
use crate::registry::{ModelSpec, NewspaperSource, RunParameters};
use crate::store::{
    collect_daily_batch, BatchError, BatchPolicy, BatchRecord, BatchStatus, CompletionStatus, Evaluation,
    EvaluationFilter, RunManifest, RunStore, StoreError, SCHEMA_VERSION,
};

/// Gives the fetcher to use for a batch day.
pub type FetcherFactory = Arc<dyn Fn(NaiveDate) -> Arc<dyn Fetcher> + Send + Sync>;

pub enum ArticleInput {
    Harvest(FetcherFactory),
    /// Pools saved by an earlier scrape.
    Corpus(Vec<CorpusEntry>),
}

#[derive(Clone)]
pub enum TimeMode {
    /// Wall clock. Each later day starts at the next UTC midnight.
    Live(Arc<dyn Clock>),
    /// Every (day, newspaper) worker gets its own manual clock starting at
    /// that day's midnight.
    Simulated { start: NaiveDate },
}

pub struct PipelineConfig {
    pub params: RunParameters,
    pub models: Vec<ModelSpec>,
    pub sources: Vec<NewspaperSource>,
    pub parallel: usize,
    pub dry_run: bool,
    pub policy: BatchPolicy,
    pub seed: Option<u64>,
    /// Resume or name a run; derived when absent.
    pub run_id: Option<String>,
    pub time: TimeMode,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("run {run_id} stopped: {source}")]
    Fatal {
        run_id: String,
        #[source]
        source: BatchError,
    },
    #[error("corpus {path}: {message}")]
    Corpus { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub run_dir: PathBuf,
    /// Valid evaluations stored per model, across the whole run.
    pub evaluations: BTreeMap<String, usize>,
    pub complete: bool,
    pub incomplete_batches: usize,
    pub discarded_newspapers: usize,
    pub repeats: usize,
    pub dry_run: bool,
}

/// One article of a saved pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub schema: u32,
    pub batch_day: NaiveDate,
    pub newspaper_id: String,
    /// Position in the newspaper's pool for that day.
    pub rank: usize,
    pub article: ArticleRecord,
}

pub fn write_corpus(path: &Path, entries: &[CorpusEntry]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for e in entries {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_corpus(path: &Path) -> Result<Vec<CorpusEntry>, PipelineError> {
    let err = |message: String| PipelineError::Corpus {
        path: path.display().to_string(),
        message,
    };
    let file = std::fs::File::open(path).map_err(|e| err(e.to_string()))?;
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        entries.push(serde_json::from_str(&line).map_err(|e| err(format!("line {}: {e}", i + 1)))?);
    }
    Ok(entries)
}

/// Pools of one scrape: every newspaper's length-filtered articles per day.
#[derive(Debug, Default)]
pub struct ScrapeResult {
    pub entries: Vec<CorpusEntry>,
    /// (day, newspaper id, error) for homepages that could not be harvested.
    pub discarded: Vec<(NaiveDate, String, String)>,
}

fn day_list(start: NaiveDate, days: u32) -> Vec<NaiveDate> {
    (0..days).map(|d| start + chrono::Days::new(d as u64)).collect()
}

fn start_date(time: &TimeMode) -> NaiveDate {
    match time {
        TimeMode::Live(clock) => clock.now().date_naive(),
        TimeMode::Simulated { start } => *start,
    }
}

async fn wait_for_day(time: &TimeMode, day: NaiveDate) {
    if let TimeMode::Live(clock) = time {
        let start = midnight(day);
        let now = clock.now();
        if now < start {
            let wait = (start - now).to_std().unwrap_or_default();
            tracing::info!(%day, wait_secs = wait.as_secs(), "waiting for the next batch day");
            clock.sleep(wait).await;
        }
    }
}

fn worker_clock(time: &TimeMode, day: NaiveDate) -> Arc<dyn Clock> {
    match time {
        TimeMode::Live(clock) => clock.clone(),
        TimeMode::Simulated { .. } => Arc::new(ManualClock::at_midnight(day)),
    }
}

/// Harvests every newspaper for `params.days` days without calling any model.
pub async fn scrape(
    params: &RunParameters,
    sources: &[NewspaperSource],
    fetchers: FetcherFactory,
    time: &TimeMode,
    parallel: usize,
) -> ScrapeResult {
    let mut result = ScrapeResult::default();
    for day in day_list(start_date(time), params.days) {
        wait_for_day(time, day).await;
        let fetcher = fetchers(day);
        let limit = Arc::new(Semaphore::new(parallel.max(1)));
        let mut tasks = JoinSet::new();
        for (idx, source) in sources.iter().cloned().enumerate() {
            let (fetcher, limit, params, clock) = (fetcher.clone(), limit.clone(), *params, worker_clock(time, day));
            tasks.spawn(async move {
                let _permit = limit.acquire_owned().await.expect("semaphore open");
                (idx, harvest_newspaper(fetcher.as_ref(), &source, &params, clock.as_ref()).await)
            });
        }
        let mut done: Vec<_> = tasks.join_all().await;
        done.sort_by_key(|(idx, _)| *idx);
        for (idx, harvest) in done {
            let source = &sources[idx];
            match harvest {
                Ok(h) => result.entries.extend(h.pool.into_iter().enumerate().map(|(rank, article)| CorpusEntry {
                    schema: SCHEMA_VERSION,
                    batch_day: day,
                    newspaper_id: source.id.clone(),
                    rank,
                    article,
                })),
                Err(e) => {
                    tracing::warn!(newspaper = %source.id, %day, error = %e, "newspaper discarded");
                    result.discarded.push((day, source.id.clone(), e.to_string()));
                }
            }
        }
    }
    result
}

#[derive(Serialize)]
struct RunFingerprint<'a> {
    params: &'a RunParameters,
    models: &'a [ModelSpec],
    sources: &'a [NewspaperSource],
    seed: Option<u64>,
    start: NaiveDate,
    dry_run: bool,
    retry_budget: u32,
    malformed_retries: u32,
    corpus: Option<String>,
}

fn corpus_digest(entries: &[CorpusEntry]) -> String {
    let mut h = Sha256::new();
    for e in entries {
        h.update(serde_json::to_vec(e).expect("corpus entry serializes"));
    }
    hex::encode(&h.finalize()[..8])
}

/// Simulated runs get an id derived from everything that determines their
/// contents; live runs get a timestamped unique id.
pub fn derive_run_id(cfg: &PipelineConfig, input: &ArticleInput) -> String {
    match &cfg.time {
        TimeMode::Simulated { start } => {
            let fp = RunFingerprint {
                params: &cfg.params,
                models: &cfg.models,
                sources: &cfg.sources,
                seed: cfg.seed,
                start: *start,
                dry_run: cfg.dry_run,
                retry_budget: cfg.policy.retry_budget,
                malformed_retries: cfg.policy.malformed_retries,
                corpus: match input {
                    ArticleInput::Corpus(c) => Some(corpus_digest(c)),
                    ArticleInput::Harvest(_) => None,
                },
            };
            let digest = Sha256::digest(serde_json::to_vec(&fp).expect("fingerprint serializes"));
            format!("sim-{}", &hex::encode(digest)[..12])
        }
        TimeMode::Live(clock) => {
            let id = uuid::Uuid::new_v4().simple().to_string();
            format!("{}-{}", clock.now().format("%Y%m%dT%H%M%SZ"), &id[..8])
        }
    }
}

struct ModelResult {
    record: BatchRecord,
    evaluations: Vec<Evaluation>,
    cost: Decimal,
}

struct NewspaperResult {
    idx: usize,
    pool: Vec<ArticleRecord>,
    models: Vec<ModelResult>,
    finished_at: DateTime<Utc>,
    fatal: Option<BatchError>,
}

struct Shared {
    gateway: Arc<Gateway>,
    models: Vec<ModelSpec>,
    wanted: usize,
    policy: BatchPolicy,
    dry_run: bool,
}

enum PoolSource {
    Fetch(Arc<dyn Fetcher>, RunParameters),
    Saved(Vec<ArticleRecord>),
}

#[allow(clippy::too_many_arguments)]
async fn process_newspaper(
    idx: usize,
    source: NewspaperSource,
    day: NaiveDate,
    pool_source: PoolSource,
    clock: Arc<dyn Clock>,
    shared: Arc<Shared>,
    evaluated: Arc<HashSet<(String, String)>>,
    pending_models: Vec<usize>,
) -> NewspaperResult {
    let record = |model: &ModelSpec, status, valid, repeats, note: Option<String>| BatchRecord {
        day,
        newspaper_id: source.id.clone(),
        model_id: model.id.clone(),
        status,
        valid,
        wanted: shared.wanted,
        repeats,
        note,
    };
    let pool = match pool_source {
        PoolSource::Saved(pool) => Ok(pool),
        PoolSource::Fetch(fetcher, params) => harvest_newspaper(fetcher.as_ref(), &source, &params, clock.as_ref())
            .await
            .map(|h| {
                tracing::info!(
                    newspaper = %source.id, %day,
                    candidates = h.candidates.len(), selected = h.selected.len(),
                    extracted = h.extracted.len(), pool = h.pool.len(),
                    "harvested"
                );
                h.pool
            }),
    };
    let pool = match pool {
        Ok(p) => p,
        Err(e) => {
            tracing::warn!(newspaper = %source.id, %day, error = %e, "newspaper discarded");
            let models = pending_models
                .iter()
                .map(|&m| ModelResult {
                    record: record(&shared.models[m], CompletionStatus::Discarded, 0, 0, Some(e.to_string())),
                    evaluations: Vec::new(),
                    cost: Decimal::ZERO,
                })
                .collect();
            return NewspaperResult {
                idx,
                pool: Vec::new(),
                models,
                finished_at: clock.now(),
                fatal: None,
            };
        }
    };

    let mut models = Vec::new();
    let mut fatal = None;
    for &m in &pending_models {
        let spec = &shared.models[m];
        let mut seen = HashSet::new();
        let fresh: Vec<ArticleRecord> = pool
            .iter()
            .filter(|a| seen.insert(a.id.clone()) && !evaluated.contains(&(a.id.clone(), spec.id.clone())))
            .cloned()
            .collect();
        let repeats = pool.len() - fresh.len();
        if shared.dry_run || fatal.is_some() {
            let (status, note) = if shared.dry_run {
                (CompletionStatus::DryRun, None)
            } else {
                (CompletionStatus::Incomplete, Some("run stopped before this batch".to_string()))
            };
            models.push(ModelResult {
                record: record(spec, status, 0, repeats, note),
                evaluations: Vec::new(),
                cost: Decimal::ZERO,
            });
            continue;
        }
        match collect_daily_batch(&shared.gateway, clock.as_ref(), &source, spec, &fresh, shared.wanted, day, shared.policy)
            .await
        {
            Ok(out) => {
                let (status, note) = match out.status {
                    BatchStatus::Complete => (CompletionStatus::Complete, None),
                    BatchStatus::Incomplete { got, wanted } => {
                        tracing::warn!(newspaper = %source.id, model = %spec.id, %day, got, wanted, "pool exhausted");
                        (CompletionStatus::Incomplete, Some(format!("pool exhausted: {got} of {wanted}")))
                    }
                };
                models.push(ModelResult {
                    record: record(spec, status, out.evaluations.len(), repeats, note),
                    evaluations: out.evaluations,
                    cost: out.cost,
                });
            }
            Err(e) => {
                models.push(ModelResult {
                    record: record(spec, CompletionStatus::Incomplete, 0, repeats, Some(e.to_string())),
                    evaluations: Vec::new(),
                    cost: Decimal::ZERO,
                });
                fatal = Some(e);
            }
        }
    }
    NewspaperResult {
        idx,
        pool,
        models,
        finished_at: clock.now(),
        fatal,
    }
}

fn validate(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    cfg.params.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
    if cfg.models.is_empty() {
        return Err(PipelineError::Config("no models selected".into()));
    }
    if cfg.sources.is_empty() {
        return Err(PipelineError::Config("registry is empty".into()));
    }
    let mut ids = BTreeSet::new();
    for m in &cfg.models {
        if !ids.insert(&m.id) {
            return Err(PipelineError::Config(format!("model {} selected twice", m.id)));
        }
    }
    Ok(())
}

fn open_or_create(root: &Path, cfg: &PipelineConfig, run_id: &str) -> Result<(RunStore, RunManifest), PipelineError> {
    match RunStore::open(root, run_id) {
        Ok(store) => {
            let mut manifest = store.manifest()?;
            for m in &cfg.models {
                if !manifest.model_ids.contains(&m.id) {
                    manifest.model_ids.push(m.id.clone());
                    manifest.decoding.insert(m.id.clone(), "provider defaults".into());
                    manifest.total_cost.entry(m.id.clone()).or_default();
                }
            }
            tracing::info!(run_id, "resuming run");
            Ok((store, manifest))
        }
        Err(StoreError::UnknownRun(_)) => {
            let started_at = match &cfg.time {
                TimeMode::Live(clock) => clock.now(),
                TimeMode::Simulated { start } => midnight(*start),
            };
            let mut manifest =
                RunManifest::new(run_id, cfg.params, cfg.models.iter().map(|m| m.id.clone()).collect(), started_at);
            manifest.seed = cfg.seed;
            manifest.sources = cfg.sources.clone();
            let store = RunStore::create(root, &manifest)?;
            Ok((store, manifest))
        }
        Err(e) => Err(e.into()),
    }
}

/// Runs every day's batches, appending to `<root>/runs/<run_id>/`.
pub async fn run_pipeline(
    cfg: PipelineConfig,
    input: ArticleInput,
    gateway: Arc<Gateway>,
    root: &Path,
) -> Result<RunSummary, PipelineError> {
    validate(&cfg)?;
    let days: Vec<NaiveDate> = match &input {
        ArticleInput::Harvest(_) => day_list(start_date(&cfg.time), cfg.params.days),
        ArticleInput::Corpus(entries) => entries.iter().map(|e| e.batch_day).collect::<BTreeSet<_>>().into_iter().collect(),
    };
    let mut saved_pools: BTreeMap<(NaiveDate, String), Vec<(usize, ArticleRecord)>> = BTreeMap::new();
    if let ArticleInput::Corpus(entries) = &input {
        let known: HashSet<&str> = cfg.sources.iter().map(|s| s.id.as_str()).collect();
        for e in entries {
            if !known.contains(e.newspaper_id.as_str()) {
                tracing::warn!(newspaper = %e.newspaper_id, "corpus newspaper not in registry, ignored");
                continue;
            }
            saved_pools
                .entry((e.batch_day, e.newspaper_id.clone()))
                .or_default()
                .push((e.rank, e.article.clone()));
        }
    }

    let run_id = cfg.run_id.clone().unwrap_or_else(|| derive_run_id(&cfg, &input));
    let (store, mut manifest) = open_or_create(root, &cfg, &run_id)?;
    store.write_manifest(&manifest)?;
    tracing::info!(run_id, days = days.len(), newspapers = cfg.sources.len(), models = cfg.models.len(), "run started");

    let shared = Arc::new(Shared {
        gateway,
        models: cfg.models.clone(),
        wanted: cfg.params.articles_per_day,
        policy: cfg.policy,
        dry_run: cfg.dry_run,
    });
    let mut finished_at = manifest.started_at;

    for day in days {
        wait_for_day(&cfg.time, day).await;
        let evaluated: Arc<HashSet<(String, String)>> = Arc::new(
            store
                .load_evaluations(&EvaluationFilter::default())?
                .into_iter()
                .map(|e| (e.article_id, e.model_id))
                .collect(),
        );
        let fetcher = match &input {
            ArticleInput::Harvest(factory) => Some(factory(day)),
            ArticleInput::Corpus(_) => None,
        };
        let limit = Arc::new(Semaphore::new(cfg.parallel.max(1)));
        let mut tasks = JoinSet::new();
        for (idx, source) in cfg.sources.iter().enumerate() {
            let pending: Vec<usize> = (0..cfg.models.len())
                .filter(|&m| {
                    manifest
                        .batch(day, &source.id, &cfg.models[m].id)
                        .is_none_or(|b| b.status != CompletionStatus::Complete)
                })
                .collect();
            if pending.is_empty() {
                continue;
            }
            let pool_source = match &fetcher {
                Some(f) => PoolSource::Fetch(f.clone(), cfg.params),
                None => {
                    let mut pool = saved_pools.remove(&(day, source.id.clone())).unwrap_or_default();
                    pool.sort_by_key(|(rank, _)| *rank);
                    PoolSource::Saved(pool.into_iter().map(|(_, a)| a).collect())
                }
            };
            let (limit, shared, evaluated, clock) =
                (limit.clone(), shared.clone(), evaluated.clone(), worker_clock(&cfg.time, day));
            let source = source.clone();
            tasks.spawn(async move {
                let _permit = limit.acquire_owned().await.expect("semaphore open");
                process_newspaper(idx, source, day, pool_source, clock, shared, evaluated, pending).await
            });
        }
        let mut results: Vec<NewspaperResult> = tasks.join_all().await;
        results.sort_by_key(|r| r.idx);

        let mut fatal = None;
        let mut appended: HashSet<(String, String)> = HashSet::new();
        for r in results {
            store.append_articles(&r.pool)?;
            for mut m in r.models {
                // the same text can surface under two newspapers on one day
                let before = m.evaluations.len();
                m.evaluations
                    .retain(|e| !evaluated.contains(&(e.article_id.clone(), e.model_id.clone())) && appended.insert((e.article_id.clone(), e.model_id.clone())));
                let dropped = before - m.evaluations.len();
                if dropped > 0 {
                    m.record.repeats += dropped;
                    m.record.valid = m.evaluations.len();
                    if m.record.status == CompletionStatus::Complete && m.record.valid < m.record.wanted {
                        m.record.status = CompletionStatus::Incomplete;
                        m.record.note = Some("article already scored under another newspaper".into());
                    }
                }
                store.append_evaluations(&m.evaluations)?;
                manifest.add_cost(&m.record.model_id, m.cost);
                manifest.record_batch(m.record);
            }
            finished_at = finished_at.max(r.finished_at);
            if fatal.is_none() {
                fatal = r.fatal;
            }
        }
        manifest.finished_at = Some(match &cfg.time {
            TimeMode::Live(clock) => clock.now(),
            TimeMode::Simulated { .. } => finished_at,
        });
        store.write_manifest(&manifest)?;
        if let Some(source) = fatal {
            return Err(PipelineError::Fatal { run_id, source });
        }
    }

    let mut evaluations: BTreeMap<String, usize> = manifest.model_ids.iter().map(|m| (m.clone(), 0)).collect();
    for e in store.load_evaluations(&EvaluationFilter::default())? {
        *evaluations.entry(e.model_id).or_default() += 1;
    }
    let incomplete_batches = manifest
        .batches
        .iter()
        .filter(|b| matches!(b.status, CompletionStatus::Incomplete | CompletionStatus::Discarded))
        .count();
    let discarded_newspapers = manifest
        .batches
        .iter()
        .filter(|b| b.status == CompletionStatus::Discarded)
        .map(|b| (b.day, &b.newspaper_id))
        .collect::<BTreeSet<_>>()
        .len();
    let summary = RunSummary {
        run_id: run_id.clone(),
        run_dir: store.dir().to_path_buf(),
        evaluations,
        complete: !cfg.dry_run && manifest.is_complete(),
        incomplete_batches,
        discarded_newspapers,
        repeats: manifest.repeat_count(),
        dry_run: cfg.dry_run,
    };
    tracing::info!(run_id, complete = summary.complete, incomplete_batches, "run finished");
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{GatewayConfig, RequestLedger, ScriptStep, ScriptedProvider};
    use crate::harvester::synthetic::SyntheticWeb;
    use crate::harvester::StaticFetcher;
    use crate::registry::{parse_registry, Config};

    fn start() -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 5, 9).unwrap()
    }

    fn tiny_registry() -> Vec<NewspaperSource> {
        parse_registry(
            "Country,Newspaper,Homepage,Positioning,SourceNote\n\
             AAA,Alpha Daily,https://alpha.example,Left,x\n\
             BBB,Beta Times,https://beta.example,Right,x\n\
             CCC,Gamma Post,https://gamma.example,Centre,x\n"
                .as_bytes(),
        )
        .unwrap()
    }

    fn synthetic(seed: u64) -> ArticleInput {
        ArticleInput::Harvest(Arc::new(move |day| Arc::new(SyntheticWeb::new(day, seed)) as Arc<dyn Fetcher>))
    }

    fn config(models: &[&str], sources: Vec<NewspaperSource>, days: u32, a: usize) -> PipelineConfig {
        let builtin = Config::builtin();
        PipelineConfig {
            params: RunParameters {
                days,
                articles_per_day: a,
                ..Default::default()
            },
            models: models.iter().map(|m| builtin.model(m).unwrap().clone()).collect(),
            sources,
            parallel: 4,
            dry_run: false,
            policy: BatchPolicy::default(),
            seed: Some(0),
            run_id: None,
            time: TimeMode::Simulated { start: start() },
        }
    }

    fn gateway() -> Arc<Gateway> {
        Arc::new(Gateway::new(
            GatewayConfig::default(),
            Arc::new(ManualClock::at_midnight(start())),
            Arc::new(RequestLedger::in_memory()),
        ))
    }

    #[tokio::test]
    async fn tiny_registry_one_day() {
        let dir = tempfile::tempdir().unwrap();
        let s = run_pipeline(config(&["mock-hash"], tiny_registry(), 1, 2), synthetic(0), gateway(), dir.path())
            .await
            .unwrap();
        assert_eq!(s.evaluations["mock-hash"], 6);
        assert!(s.complete);
        let store = RunStore::open(dir.path(), &s.run_id).unwrap();
        let m = store.manifest().unwrap();
        assert_eq!(m.batches.len(), 3);
        assert_eq!(m.started_at, midnight(start()));
        assert!(s.run_id.starts_with("sim-"));
    }

    #[tokio::test]
    async fn days_and_models_multiply() {
        let dir = tempfile::tempdir().unwrap();
        let s = run_pipeline(
            config(&["mock-hash", "mock-fixed"], tiny_registry(), 3, 4),
            synthetic(1),
            gateway(),
            dir.path(),
        )
        .await
        .unwrap();
        assert_eq!(s.evaluations["mock-hash"], 36);
        assert_eq!(s.evaluations["mock-fixed"], 36);
        let store = RunStore::open(dir.path(), &s.run_id).unwrap();
        let d = |x| NaiveDate::from_ymd_opt(2024, 5, x).unwrap();
        let mut f = EvaluationFilter::days(d(10), d(11));
        f.model_id = Some("mock-fixed".into());
        assert_eq!(store.load_evaluations(&f).unwrap().len(), 24);
    }

    #[tokio::test]
    async fn dry_run_makes_no_calls() {
        let dir = tempfile::tempdir().unwrap();
        let ledger = Arc::new(RequestLedger::in_memory());
        let g = Arc::new(Gateway::new(GatewayConfig::default(), Arc::new(ManualClock::at_midnight(start())), ledger.clone()));
        let mut cfg = config(&["mock-hash"], tiny_registry(), 2, 5);
        cfg.dry_run = true;
        let s = run_pipeline(cfg, synthetic(0), g, dir.path()).await.unwrap();
        assert!(ledger.is_empty());
        assert_eq!(s.evaluations["mock-hash"], 0);
        assert!(!s.complete);
        let store = RunStore::open(dir.path(), &s.run_id).unwrap();
        assert!(!store.load_articles().unwrap().is_empty());
        assert!(store.manifest().unwrap().batches.iter().all(|b| b.status == CompletionStatus::DryRun));
    }

    #[tokio::test]
    async fn unreachable_homepage_is_discarded() {
        let dir = tempfile::tempdir().unwrap();
        let input = ArticleInput::Harvest(Arc::new(|_| Arc::new(StaticFetcher::new()) as Arc<dyn Fetcher>));
        let s = run_pipeline(config(&["mock-fixed"], tiny_registry(), 1, 2), input, gateway(), dir.path())
            .await
            .unwrap();
        assert_eq!(s.discarded_newspapers, 3);
        assert!(!s.complete);
    }

    #[tokio::test]
    async fn same_pages_every_day_are_not_rescored() {
        let dir = tempfile::tempdir().unwrap();
        let frozen = Arc::new(SyntheticWeb::new(start(), 4));
        let input = ArticleInput::Harvest(Arc::new(move |_| frozen.clone() as Arc<dyn Fetcher>));
        let s = run_pipeline(config(&["mock-hash"], tiny_registry(), 2, 5), input, gateway(), dir.path())
            .await
            .unwrap();
        let store = RunStore::open(dir.path(), &s.run_id).unwrap();
        let m = store.manifest().unwrap();
        let day2: Vec<&BatchRecord> = m.batches.iter().filter(|b| b.day != start()).collect();
        assert!(day2.iter().all(|b| b.repeats >= 5));
        assert!(s.repeats >= 15);
        let evals = store.load_evaluations(&EvaluationFilter::default()).unwrap();
        let unique: HashSet<_> = evals.iter().map(|e| &e.article_id).collect();
        assert_eq!(unique.len(), evals.len());
    }

    #[tokio::test]
    async fn resume_fills_only_missing_batches() {
        let dir = tempfile::tempdir().unwrap();
        let spec = Config::builtin().model("mock-fixed").unwrap().clone();
        let flaky = Arc::new(ScriptedProvider::new(vec![ScriptStep::Status(400); 200], ScriptStep::Reply("[1, 1]".into())));
        let g = Arc::new(
            Gateway::new(GatewayConfig::default(), Arc::new(ManualClock::at_midnight(start())), Arc::new(RequestLedger::in_memory()))
                .with_provider(&spec.id, flaky),
        );
        let mut cfg = config(&["mock-fixed"], tiny_registry(), 1, 3);
        cfg.run_id = Some("resumable".into());
        cfg.parallel = 1;
        let first = run_pipeline(cfg, synthetic(2), g, dir.path()).await.unwrap();
        assert!(!first.complete);

        let mut cfg = config(&["mock-fixed"], tiny_registry(), 1, 3);
        cfg.run_id = Some("resumable".into());
        let second = run_pipeline(cfg, synthetic(2), gateway(), dir.path()).await.unwrap();
        assert!(second.complete);
        assert_eq!(second.evaluations["mock-fixed"], 9);
    }

    #[tokio::test]
    async fn corpus_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let params = RunParameters { days: 2, ..Default::default() };
        let factory: FetcherFactory = Arc::new(|day| Arc::new(SyntheticWeb::new(day, 3)) as Arc<dyn Fetcher>);
        let scraped = scrape(&params, &tiny_registry(), factory, &TimeMode::Simulated { start: start() }, 2).await;
        assert!(scraped.discarded.is_empty());
        let path = dir.path().join("corpus.jsonl");
        write_corpus(&path, &scraped.entries).unwrap();
        let entries = read_corpus(&path).unwrap();
        assert_eq!(entries, scraped.entries);

        let s = run_pipeline(config(&["mock-hash"], tiny_registry(), 1, 5), ArticleInput::Corpus(entries), gateway(), dir.path())
            .await
            .unwrap();
        assert_eq!(s.evaluations["mock-hash"], 30);
        assert!(s.complete);
    }

    #[tokio::test]
    async fn rejects_bad_config_before_touching_disk() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = config(&["mock-fixed"], tiny_registry(), 1, 3);
        cfg.params.min_chars = 6000;
        assert!(matches!(run_pipeline(cfg, synthetic(0), gateway(), dir.path()).await, Err(PipelineError::Config(_))));
        let cfg = config(&["mock-fixed"], Vec::new(), 1, 3);
        assert!(matches!(run_pipeline(cfg, synthetic(0), gateway(), dir.path()).await, Err(PipelineError::Config(_))));
        assert!(!dir.path().join("runs").exists());
    }
}
