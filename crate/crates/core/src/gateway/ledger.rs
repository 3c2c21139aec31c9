//! Append-only record of every provider call, used for quota accounting and
//! audit.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub schema: u32,
    pub at: DateTime<Utc>,
    pub model_id: String,
    /// 0 for the first try, 1 for the first retry, ...
    pub attempt: u32,
    /// `ok`, `timeout`, `transport`, `invalid` or `status:<code>`.
    pub outcome: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub latency_ms: u64,
}

#[derive(Default)]
struct State {
    counts: HashMap<(String, NaiveDate), u32>,
    entries: Vec<LedgerEntry>,
}

/// Ends a partial last line so later appends start on a fresh line.
pub(crate) fn terminate_torn_line(path: &Path) -> std::io::Result<()> {
    let bytes = std::fs::read(path)?;
    if bytes.last().is_some_and(|b| *b != b'\n') {
        OpenOptions::new().append(true).open(path)?.write_all(b"\n")?;
    }
    Ok(())
}

pub struct RequestLedger {
    path: Option<PathBuf>,
    state: Mutex<State>,
}

impl RequestLedger {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            state: Mutex::default(),
        }
    }

    /// Opens (or creates) a JSONL ledger, replaying earlier entries so quota
    /// counts survive restarts.
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let mut state = State::default();
        if path.exists() {
            terminate_torn_line(path)?;
            let file = std::fs::File::open(path)?;
            for line in BufReader::new(file).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                // a torn final line from a crash is skipped
                let Ok(entry) = serde_json::from_str::<LedgerEntry>(&line) else {
                    tracing::warn!(path = %path.display(), "skipping unreadable ledger line");
                    continue;
                };
                *state.counts.entry((entry.model_id.clone(), entry.at.date_naive())).or_default() += 1;
                state.entries.push(entry);
            }
        }
        Ok(Self {
            path: Some(path.to_path_buf()),
            state: Mutex::new(state),
        })
    }

    /// Claims one request slot for `model_id` on `day`. Returns false when the
    /// quota is already used up.
    pub fn try_reserve(&self, model_id: &str, day: NaiveDate, quota: Option<u32>) -> bool {
        let mut state = self.state.lock().expect("ledger poisoned");
        let count = state.counts.entry((model_id.to_string(), day)).or_default();
        match quota {
            Some(q) if *count >= q => false,
            _ => {
                *count += 1;
                true
            }
        }
    }

    pub fn record(&self, entry: LedgerEntry) -> std::io::Result<()> {
        let mut state = self.state.lock().expect("ledger poisoned");
        if let Some(path) = &self.path {
            let mut line = serde_json::to_string(&entry).map_err(std::io::Error::other)?;
            line.push('\n');
            let mut file = OpenOptions::new().create(true).append(true).open(path)?;
            file.write_all(line.as_bytes())?;
        }
        state.entries.push(entry);
        Ok(())
    }

    pub fn count(&self, model_id: &str, day: NaiveDate) -> u32 {
        let state = self.state.lock().expect("ledger poisoned");
        state.counts.get(&(model_id.to_string(), day)).copied().unwrap_or(0)
    }

    pub fn entries(&self) -> Vec<LedgerEntry> {
        self.state.lock().expect("ledger poisoned").entries.clone()
    }

    pub fn len(&self) -> usize {
        self.state.lock().expect("ledger poisoned").entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
