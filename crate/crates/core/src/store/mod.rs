//! Append-only run store and daily batch collection.
//!
//! A run lives in `<root>/runs/<run_id>/`:
//!
//! - `evaluations.jsonl`: one [`Evaluation`] per line.
//! - `articles.jsonl`: the extracted articles that were sent to a model.
//! - `assessments.jsonl`: anonymous [`HumanAssessment`]s.
//! - `manifest.json`: the [`RunManifest`], rewritten atomically.
//!
//! Every record carries `schema: 1`. Each record is written with a single
//! append, and a torn final line left by a crash is ignored on read and cut
//! off before the next append.

mod batch;

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, NaiveDate, Utc};
use rust_decimal::Decimal;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::registry::{NewspaperSource, RunParameters};
use crate::score::CompassScore;

pub use crate::harvester::ArticleRecord;
pub use batch::{collect_daily_batch, BatchError, BatchOutcome, BatchPolicy, BatchStatus, SkippedArticle};

pub const SCHEMA_VERSION: u32 = 1;

const EVALUATIONS: &str = "evaluations.jsonl";
const ARTICLES: &str = "articles.jsonl";
const ASSESSMENTS: &str = "assessments.jsonl";
const MANIFEST: &str = "manifest.json";
const LOCK: &str = ".lock";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Corrupt { path: String, line: usize, message: String },
    #[error("run {0} not found")]
    UnknownRun(String),
    #[error("run {0} already exists")]
    RunExists(String),
    #[error("invalid run id {0:?}")]
    InvalidRunId(String),
    #[error("run {0} is locked by another writer")]
    Locked(String),
    #[error("article {article_id} already evaluated by {model_id} in this run")]
    DuplicateEvaluation { article_id: String, model_id: String },
    #[error("article {0} is not part of this run")]
    UnknownArticle(String),
    #[error("stored raw text {raw:?} does not parse to the stored score")]
    ScoreMismatch { raw: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn schema_one() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    #[serde(default = "schema_one")]
    pub schema: u32,
    pub article_id: String,
    pub newspaper_id: String,
    pub model_id: String,
    pub score: CompassScore,
    pub raw_text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub evaluated_at: DateTime<Utc>,
    pub batch_day: NaiveDate,
}

impl Evaluation {
    /// Checks that `raw_text` still parses to `score`.
    pub fn verify(&self) -> Result<(), StoreError> {
        match crate::score::parse_score(&self.raw_text) {
            Ok(s) if s == self.score => Ok(()),
            _ => Err(StoreError::ScoreMismatch {
                raw: self.raw_text.clone(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanAssessment {
    #[serde(default = "schema_one")]
    pub schema: u32,
    pub article_id: String,
    pub score: CompassScore,
    pub submitted_at: DateTime<Utc>,
    /// SHA-256 of the browser session cookie; the cookie itself is never stored.
    pub anonymous_session_token: String,
}

/// Opaque digest of a raw session cookie value.
pub fn session_token_digest(raw: &str) -> String {
    hex::encode(Sha256::digest(raw.as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletionStatus {
    Complete,
    Incomplete,
    /// The homepage could not be harvested.
    Discarded,
    /// Harvest only, no provider calls.
    DryRun,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub day: NaiveDate,
    pub newspaper_id: String,
    pub model_id: String,
    pub status: CompletionStatus,
    pub valid: usize,
    pub wanted: usize,
    /// Pool articles passed over because the model already scored them in this run.
    #[serde(default)]
    pub repeats: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    #[serde(default = "schema_one")]
    pub schema: u32,
    pub run_id: String,
    pub parameters: RunParameters,
    pub model_ids: Vec<String>,
    pub started_at: DateTime<Utc>,
    #[serde(default)]
    pub finished_at: Option<DateTime<Utc>>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Decoding settings per model. Providers are called with their defaults.
    #[serde(default)]
    pub decoding: BTreeMap<String, String>,
    #[serde(default)]
    pub sources: Vec<NewspaperSource>,
    #[serde(default)]
    pub batches: Vec<BatchRecord>,
    #[serde(default)]
    pub total_cost: BTreeMap<String, Decimal>,
}

impl RunManifest {
    pub fn new(run_id: &str, parameters: RunParameters, model_ids: Vec<String>, started_at: DateTime<Utc>) -> Self {
        let decoding = model_ids.iter().map(|m| (m.clone(), "provider defaults".to_string())).collect();
        let total_cost = model_ids.iter().map(|m| (m.clone(), Decimal::ZERO)).collect();
        Self {
            schema: SCHEMA_VERSION,
            run_id: run_id.to_string(),
            parameters,
            model_ids,
            started_at,
            finished_at: None,
            seed: None,
            decoding,
            sources: Vec::new(),
            batches: Vec::new(),
            total_cost,
        }
    }

    /// Records a batch outcome, replacing any earlier record for the same
    /// (day, newspaper, model).
    pub fn record_batch(&mut self, record: BatchRecord) {
        self.batches
            .retain(|b| !(b.day == record.day && b.newspaper_id == record.newspaper_id && b.model_id == record.model_id));
        self.batches.push(record);
        self.batches
            .sort_by(|a, b| (a.day, &a.newspaper_id, &a.model_id).cmp(&(b.day, &b.newspaper_id, &b.model_id)));
    }

    pub fn batch(&self, day: NaiveDate, newspaper_id: &str, model_id: &str) -> Option<&BatchRecord> {
        self.batches
            .iter()
            .find(|b| b.day == day && b.newspaper_id == newspaper_id && b.model_id == model_id)
    }

    pub fn add_cost(&mut self, model_id: &str, amount: Decimal) {
        let total = self.total_cost.entry(model_id.to_string()).or_default();
        *total = (*total + amount).normalize();
    }

    /// True when every batch for every model reached its article target.
    pub fn is_complete(&self) -> bool {
        !self.batches.is_empty() && self.batches.iter().all(|b| b.status == CompletionStatus::Complete)
    }

    pub fn repeat_count(&self) -> usize {
        self.batches.iter().map(|b| b.repeats).sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EvaluationFilter {
    pub newspaper_id: Option<String>,
    pub model_id: Option<String>,
    /// Inclusive bounds on `batch_day`.
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
}

impl EvaluationFilter {
    pub fn model(model_id: &str) -> Self {
        Self {
            model_id: Some(model_id.to_string()),
            ..Self::default()
        }
    }

    pub fn days(from: NaiveDate, to: NaiveDate) -> Self {
        Self {
            from: Some(from),
            to: Some(to),
            ..Self::default()
        }
    }

    pub fn matches(&self, e: &Evaluation) -> bool {
        self.newspaper_id.as_ref().is_none_or(|n| *n == e.newspaper_id)
            && self.model_id.as_ref().is_none_or(|m| *m == e.model_id)
            && self.from.is_none_or(|d| e.batch_day >= d)
            && self.to.is_none_or(|d| e.batch_day <= d)
    }
}

fn valid_run_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

/// Reads every whole JSON line of `path`. A torn final line is skipped;
/// an unreadable line elsewhere is corruption.
fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let mut lines = BufReader::new(file).split(b'\n').peekable();
    let mut out = Vec::new();
    let mut n = 0;
    while let Some(line) = lines.next() {
        let line = line.map_err(io_err(path))?;
        n += 1;
        let last = lines.peek().is_none();
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        match serde_json::from_slice(&line) {
            Ok(v) => out.push(v),
            Err(_) if last => {
                tracing::warn!(path = %path.display(), line = n, "ignoring torn final record");
            }
            Err(e) => {
                return Err(StoreError::Corrupt {
                    path: path.display().to_string(),
                    line: n,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

#[derive(Default)]
struct Index {
    loaded: bool,
    evaluated: HashSet<(String, String)>,
    articles: HashSet<String>,
}

struct Writer {
    lock: Option<File>,
    index: Index,
}

/// Handle on one run directory. Reads never lock; the first write takes an
/// advisory lock on the run that is held until the handle is dropped.
pub struct RunStore {
    run_id: String,
    dir: PathBuf,
    writer: Mutex<Writer>,
}

impl RunStore {
    pub fn run_dir(root: &Path, run_id: &str) -> PathBuf {
        root.join("runs").join(run_id)
    }

    /// Creates a new run directory holding `manifest`.
    pub fn create(root: &Path, manifest: &RunManifest) -> Result<Self, StoreError> {
        let run_id = &manifest.run_id;
        if !valid_run_id(run_id) {
            return Err(StoreError::InvalidRunId(run_id.clone()));
        }
        let dir = Self::run_dir(root, run_id);
        if dir.join(MANIFEST).exists() {
            return Err(StoreError::RunExists(run_id.clone()));
        }
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let store = Self::handle(run_id, dir);
        store.write_manifest(manifest)?;
        Ok(store)
    }

    pub fn open(root: &Path, run_id: &str) -> Result<Self, StoreError> {
        if !valid_run_id(run_id) {
            return Err(StoreError::UnknownRun(run_id.to_string()));
        }
        let dir = Self::run_dir(root, run_id);
        if !dir.join(MANIFEST).is_file() {
            return Err(StoreError::UnknownRun(run_id.to_string()));
        }
        Ok(Self::handle(run_id, dir))
    }

    fn handle(run_id: &str, dir: PathBuf) -> Self {
        Self {
            run_id: run_id.to_string(),
            dir,
            writer: Mutex::new(Writer {
                lock: None,
                index: Index::default(),
            }),
        }
    }

    /// Run ids under `root`, sorted.
    pub fn list_runs(root: &Path) -> Result<Vec<String>, StoreError> {
        let runs = root.join("runs");
        let entries = match std::fs::read_dir(&runs) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(&runs)(e)),
        };
        let mut ids = Vec::new();
        for entry in entries {
            let entry = entry.map_err(io_err(&runs))?;
            if entry.path().join(MANIFEST).is_file() {
                ids.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        ids.sort();
        Ok(ids)
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn manifest(&self) -> Result<RunManifest, StoreError> {
        let path = self.path(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn write_manifest(&self, manifest: &RunManifest) -> Result<(), StoreError> {
        let mut w = self.writer.lock().expect("store poisoned");
        self.ensure_lock(&mut w)?;
        let path = self.path(MANIFEST);
        let tmp = self.path("manifest.json.tmp");
        let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&tmp, text).map_err(io_err(&tmp))?;
        std::fs::rename(&tmp, &path).map_err(io_err(&path))
    }

    fn ensure_lock(&self, w: &mut Writer) -> Result<(), StoreError> {
        if w.lock.is_some() {
            return Ok(());
        }
        let path = self.path(LOCK);
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(io_err(&path))?;
        match file.try_lock() {
            Ok(()) => {}
            Err(std::fs::TryLockError::WouldBlock) => return Err(StoreError::Locked(self.run_id.clone())),
            Err(std::fs::TryLockError::Error(e)) => return Err(io_err(&path)(e)),
        }
        for name in [EVALUATIONS, ARTICLES, ASSESSMENTS] {
            let p = self.path(name);
            if p.exists() {
                truncate_torn_tail(&p).map_err(io_err(&p))?;
            }
        }
        w.lock = Some(file);
        Ok(())
    }

    fn ensure_index(&self, w: &mut Writer) -> Result<(), StoreError> {
        if w.index.loaded {
            return Ok(());
        }
        let evals: Vec<Evaluation> = read_jsonl(&self.path(EVALUATIONS))?;
        let articles: Vec<ArticleRecord> = read_jsonl(&self.path(ARTICLES))?;
        w.index = Index {
            loaded: true,
            evaluated: evals.into_iter().map(|e| (e.article_id, e.model_id)).collect(),
            articles: articles.into_iter().map(|a| a.id).collect(),
        };
        Ok(())
    }

    fn append_lines(&self, name: &str, lines: &[String]) -> Result<(), StoreError> {
        if lines.is_empty() {
            return Ok(());
        }
        let path = self.path(name);
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        for line in lines {
            // one write per record keeps appends whole at record granularity
            file.write_all(line.as_bytes()).map_err(io_err(&path))?;
        }
        file.sync_data().map_err(io_err(&path))
    }

    /// Appends evaluations. Nothing is written if any (article, model) pair
    /// is already present or repeated within `evals`.
    pub fn append_evaluations(&self, evals: &[Evaluation]) -> Result<(), StoreError> {
        let mut w = self.writer.lock().expect("store poisoned");
        self.ensure_lock(&mut w)?;
        self.ensure_index(&mut w)?;
        let mut fresh = HashSet::new();
        for e in evals {
            e.verify()?;
            let key = (e.article_id.clone(), e.model_id.clone());
            if w.index.evaluated.contains(&key) || !fresh.insert(key) {
                return Err(StoreError::DuplicateEvaluation {
                    article_id: e.article_id.clone(),
                    model_id: e.model_id.clone(),
                });
            }
        }
        let lines: Vec<String> = evals.iter().map(to_line).collect();
        self.append_lines(EVALUATIONS, &lines)?;
        w.index.evaluated.extend(fresh);
        Ok(())
    }

    /// Matching evaluations ordered by `evaluated_at`; ties keep file order.
    pub fn load_evaluations(&self, filter: &EvaluationFilter) -> Result<Vec<Evaluation>, StoreError> {
        let mut evals: Vec<Evaluation> = read_jsonl(&self.path(EVALUATIONS))?;
        evals.retain(|e| filter.matches(e));
        evals.sort_by_key(|e| e.evaluated_at);
        Ok(evals)
    }

    pub fn is_evaluated(&self, article_id: &str, model_id: &str) -> Result<bool, StoreError> {
        let mut w = self.writer.lock().expect("store poisoned");
        self.ensure_index(&mut w)?;
        Ok(w.index.evaluated.contains(&(article_id.to_string(), model_id.to_string())))
    }

    pub fn find_evaluation(&self, article_id: &str, model_id: &str) -> Result<Option<Evaluation>, StoreError> {
        if !self.is_evaluated(article_id, model_id)? {
            return Ok(None);
        }
        let evals: Vec<Evaluation> = read_jsonl(&self.path(EVALUATIONS))?;
        Ok(evals.into_iter().find(|e| e.article_id == article_id && e.model_id == model_id))
    }

    /// Stores articles not yet present; repeated ids are ignored.
    pub fn append_articles(&self, articles: &[ArticleRecord]) -> Result<(), StoreError> {
        let mut w = self.writer.lock().expect("store poisoned");
        self.ensure_lock(&mut w)?;
        self.ensure_index(&mut w)?;
        let mut lines = Vec::new();
        let mut fresh = Vec::new();
        for a in articles {
            if w.index.articles.contains(&a.id) || fresh.contains(&a.id) {
                continue;
            }
            fresh.push(a.id.clone());
            lines.push(to_line(a));
        }
        self.append_lines(ARTICLES, &lines)?;
        w.index.articles.extend(fresh);
        Ok(())
    }

    pub fn has_article(&self, article_id: &str) -> Result<bool, StoreError> {
        let mut w = self.writer.lock().expect("store poisoned");
        self.ensure_index(&mut w)?;
        Ok(w.index.articles.contains(article_id))
    }

    pub fn article(&self, article_id: &str) -> Result<Option<ArticleRecord>, StoreError> {
        let articles: Vec<ArticleRecord> = read_jsonl(&self.path(ARTICLES))?;
        Ok(articles.into_iter().find(|a| a.id == article_id))
    }

    pub fn load_articles(&self) -> Result<Vec<ArticleRecord>, StoreError> {
        read_jsonl(&self.path(ARTICLES))
    }

    /// Appends an assessment. A later submission from the same session for the
    /// same article replaces the earlier one when read back.
    pub fn record_assessment(&self, a: &HumanAssessment) -> Result<(), StoreError> {
        if !self.has_article(&a.article_id)? {
            return Err(StoreError::UnknownArticle(a.article_id.clone()));
        }
        let mut w = self.writer.lock().expect("store poisoned");
        self.ensure_lock(&mut w)?;
        self.append_lines(ASSESSMENTS, &[to_line(a)])
    }

    /// Current assessments: the latest per (session, article), in the order
    /// their first submission arrived.
    pub fn load_assessments(&self) -> Result<Vec<HumanAssessment>, StoreError> {
        let all: Vec<HumanAssessment> = read_jsonl(&self.path(ASSESSMENTS))?;
        let mut order: Vec<(String, String)> = Vec::new();
        let mut latest: BTreeMap<(String, String), HumanAssessment> = BTreeMap::new();
        for a in all {
            let key = (a.anonymous_session_token.clone(), a.article_id.clone());
            if !latest.contains_key(&key) {
                order.push(key.clone());
            }
            latest.insert(key, a);
        }
        Ok(order.into_iter().filter_map(|k| latest.remove(&k)).collect())
    }
}

/// Cuts a partial final record left by an interrupted append.
fn truncate_torn_tail(path: &Path) -> std::io::Result<()> {
    let bytes = std::fs::read(path)?;
    if bytes.last().is_some_and(|b| *b != b'\n') {
        let keep = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
        tracing::warn!(path = %path.display(), dropped = bytes.len() - keep, "truncating torn final record");
        OpenOptions::new().write(true).open(path)?.set_len(keep as u64)?;
    }
    Ok(())
}

fn to_line<T: Serialize>(value: &T) -> String {
    let mut line = serde_json::to_string(value).expect("record serializes");
    line.push('\n');
    line
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use url::Url;

    fn eval(article: &str, model: &str, day: u32, score: (i32, i32)) -> Evaluation {
        Evaluation {
            schema: SCHEMA_VERSION,
            article_id: article.into(),
            newspaper_id: "np".into(),
            model_id: model.into(),
            score: CompassScore::new(score.0 as f64, score.1 as f64).unwrap(),
            raw_text: format!("[{}, {}]", score.0, score.1),
            input_tokens: 10,
            output_tokens: 3,
            evaluated_at: Utc.with_ymd_and_hms(2024, 5, day, 12, 0, 0).unwrap(),
            batch_day: NaiveDate::from_ymd_opt(2024, 5, day).unwrap(),
        }
    }

    fn new_store(dir: &Path) -> RunStore {
        let m = RunManifest::new("r1", RunParameters::default(), vec!["m".into()], Utc::now());
        RunStore::create(dir, &m).unwrap()
    }

    fn article(body: &str) -> ArticleRecord {
        ArticleRecord::new("np", Url::parse("https://np.example/a").unwrap(), None, body.into(), Utc::now())
    }

    #[test]
    fn round_trip_and_uniqueness() {
        let dir = tempfile::tempdir().unwrap();
        let store = new_store(dir.path());
        let evals = vec![eval("a", "m", 9, (0, 0)), eval("b", "m", 9, (-10, 4))];
        store.append_evaluations(&evals).unwrap();
        assert_eq!(store.load_evaluations(&EvaluationFilter::default()).unwrap(), evals);

        let err = store.append_evaluations(&[eval("c", "m", 9, (1, 1)), eval("a", "m", 10, (1, 1))]).unwrap_err();
        assert!(matches!(err, StoreError::DuplicateEvaluation { ref article_id, .. } if article_id == "a"));
        assert_eq!(store.load_evaluations(&EvaluationFilter::default()).unwrap().len(), 2);

        let reopened = RunStore::open(dir.path(), "r1");
        drop(store);
        let reopened = reopened.unwrap();
        assert!(reopened.is_evaluated("a", "m").unwrap());
        assert!(matches!(reopened.append_evaluations(&[eval("a", "m", 11, (0, 0))]), Err(StoreError::DuplicateEvaluation { .. })));
        reopened.append_evaluations(&[eval("a", "other", 11, (0, 0))]).unwrap();
    }

    #[test]
    fn filters() {
        let dir = tempfile::tempdir().unwrap();
        let store = new_store(dir.path());
        let mut evals = Vec::new();
        for day in 9..=13 {
            for m in ["x", "y"] {
                evals.push(eval(&format!("a{day}"), m, day, (0, 0)));
            }
        }
        store.append_evaluations(&evals).unwrap();
        assert_eq!(store.load_evaluations(&EvaluationFilter::model("x")).unwrap().len(), 5);
        let d = |x| NaiveDate::from_ymd_opt(2024, 5, x).unwrap();
        let mut f = EvaluationFilter::days(d(10), d(11));
        assert_eq!(store.load_evaluations(&f).unwrap().len(), 4);
        f.model_id = Some("y".into());
        assert!(store.load_evaluations(&f).unwrap().iter().all(|e| e.model_id == "y" && e.batch_day <= d(11)));
    }

    #[test]
    fn ordered_by_evaluation_time() {
        let dir = tempfile::tempdir().unwrap();
        let store = new_store(dir.path());
        store.append_evaluations(&[eval("late", "m", 12, (0, 0)), eval("early", "m", 9, (0, 0))]).unwrap();
        let ids: Vec<_> = store.load_evaluations(&EvaluationFilter::default()).unwrap().into_iter().map(|e| e.article_id).collect();
        assert_eq!(ids, ["early", "late"]);
    }

    #[test]
    fn torn_tail_is_ignored_and_terminated() {
        let dir = tempfile::tempdir().unwrap();
        let store = new_store(dir.path());
        store.append_evaluations(&[eval("a", "m", 9, (0, 0))]).unwrap();
        drop(store);
        let path = RunStore::run_dir(dir.path(), "r1").join(EVALUATIONS);
        OpenOptions::new().append(true).open(&path).unwrap().write_all(b"{\"schema\":1,\"article_id\":\"b").unwrap();

        let store = RunStore::open(dir.path(), "r1").unwrap();
        assert_eq!(store.load_evaluations(&EvaluationFilter::default()).unwrap().len(), 1);
        store.append_evaluations(&[eval("c", "m", 9, (0, 0))]).unwrap();
        let ids: Vec<_> = store.load_evaluations(&EvaluationFilter::default()).unwrap().into_iter().map(|e| e.article_id).collect();
        assert_eq!(ids, ["a", "c"]);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let store = new_store(dir.path());
        store.append_evaluations(&[eval("a", "m", 9, (0, 0))]).unwrap();
        let path = store.dir().join(EVALUATIONS);
        OpenOptions::new().append(true).open(&path).unwrap().write_all(b"garbage\n").unwrap();
        store.append_evaluations(&[eval("b", "m", 9, (0, 0))]).unwrap();
        assert!(matches!(store.load_evaluations(&EvaluationFilter::default()), Err(StoreError::Corrupt { line: 2, .. })));
    }

    #[test]
    fn rejects_mismatched_raw_text() {
        let dir = tempfile::tempdir().unwrap();
        let store = new_store(dir.path());
        let mut e = eval("a", "m", 9, (1, 1));
        e.raw_text = "[2, 1]".into();
        assert!(matches!(store.append_evaluations(&[e]), Err(StoreError::ScoreMismatch { .. })));
    }

    #[test]
    fn second_writer_is_locked_out() {
        let dir = tempfile::tempdir().unwrap();
        let a = new_store(dir.path());
        a.append_evaluations(&[eval("a", "m", 9, (0, 0))]).unwrap();
        let b = RunStore::open(dir.path(), "r1").unwrap();
        assert_eq!(b.load_evaluations(&EvaluationFilter::default()).unwrap().len(), 1);
        assert!(matches!(b.append_evaluations(&[eval("b", "m", 9, (0, 0))]), Err(StoreError::Locked(_))));
        drop(a);
        b.append_evaluations(&[eval("b", "m", 9, (0, 0))]).unwrap();
    }

    #[test]
    fn assessments_overwrite_per_session() {
        let dir = tempfile::tempdir().unwrap();
        let store = new_store(dir.path());
        let art = article("some body text");
        store.append_articles(&[art.clone(), art.clone()]).unwrap();
        assert_eq!(store.load_articles().unwrap().len(), 1);

        let assess = |token: &str, e: f64| HumanAssessment {
            schema: SCHEMA_VERSION,
            article_id: art.id.clone(),
            score: CompassScore::new(e, 4.0).unwrap(),
            submitted_at: Utc::now(),
            anonymous_session_token: session_token_digest(token),
        };
        store.record_assessment(&assess("s1", -3.0)).unwrap();
        assert_eq!(store.load_assessments().unwrap()[0].score.economic(), -3.0);
        store.record_assessment(&assess("s1", 5.0)).unwrap();
        store.record_assessment(&assess("s2", 1.0)).unwrap();
        let all = store.load_assessments().unwrap();
        assert_eq!(all.len(), 2);
        assert_eq!(all[0].score.economic(), 5.0);

        let mut missing = assess("s1", 0.0);
        missing.article_id = "nope".into();
        assert!(matches!(store.record_assessment(&missing), Err(StoreError::UnknownArticle(_))));
    }

    #[test]
    fn session_digest_is_opaque() {
        let d = session_token_digest("cookie-value");
        assert_eq!(d.len(), 64);
        assert!(!d.contains("cookie"));
        assert_eq!(d, session_token_digest("cookie-value"));
    }

    #[test]
    fn manifest_round_trip_and_batches() {
        let dir = tempfile::tempdir().unwrap();
        let store = new_store(dir.path());
        let mut m = store.manifest().unwrap();
        let day = NaiveDate::from_ymd_opt(2024, 5, 9).unwrap();
        let rec = |status, valid| BatchRecord {
            day,
            newspaper_id: "np".into(),
            model_id: "m".into(),
            status,
            valid,
            wanted: 5,
            repeats: 0,
            note: None,
        };
        m.record_batch(rec(CompletionStatus::Incomplete, 3));
        assert!(!m.is_complete());
        m.record_batch(rec(CompletionStatus::Complete, 5));
        assert_eq!(m.batches.len(), 1);
        assert!(m.is_complete());
        m.add_cost("m", "0.25".parse().unwrap());
        m.add_cost("m", "0.75".parse().unwrap());
        store.write_manifest(&m).unwrap();
        let back = store.manifest().unwrap();
        assert_eq!(back, m);
        assert_eq!(back.total_cost["m"], Decimal::ONE);
    }

    #[test]
    fn run_ids() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(RunStore::open(dir.path(), "missing"), Err(StoreError::UnknownRun(_))));
        assert!(matches!(RunStore::open(dir.path(), "../etc"), Err(StoreError::UnknownRun(_))));
        let m = RunManifest::new("../x", RunParameters::default(), vec![], Utc::now());
        assert!(matches!(RunStore::create(dir.path(), &m), Err(StoreError::InvalidRunId(_))));
        new_store(dir.path());
        let m = RunManifest::new("r1", RunParameters::default(), vec![], Utc::now());
        assert!(matches!(RunStore::create(dir.path(), &m), Err(StoreError::RunExists(_))));
        assert_eq!(RunStore::list_runs(dir.path()).unwrap(), ["r1"]);
    }
}
