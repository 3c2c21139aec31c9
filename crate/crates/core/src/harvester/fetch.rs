//! Page fetching.
//!
//! [`HttpFetcher`] is the live client: it honours robots.txt and keeps a
//! minimum delay between requests to the same host. [`StaticFetcher`] and
//! [`DirFetcher`] serve in-memory or on-disk fixtures.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use thiserror::Error;
use tokio::sync::Mutex;
use tokio::time::Instant;
use url::Url;

pub const DEFAULT_USER_AGENT: &str = concat!("compass-audit/", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone)]
pub struct Page {
    /// Final URL after redirects.
    pub url: Url,
    pub content_type: Option<String>,
    pub body: String,
}

impl Page {
    pub fn html(url: Url, body: impl Into<String>) -> Self {
        Self {
            url,
            content_type: Some("text/html; charset=utf-8".into()),
            body: body.into(),
        }
    }

    /// Missing content types are given the benefit of the doubt.
    pub fn is_html(&self) -> bool {
        self.content_type
            .as_deref()
            .map(|ct| {
                let ct = ct.to_ascii_lowercase();
                ct.contains("text/html") || ct.contains("application/xhtml")
            })
            .unwrap_or(true)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum FetchError {
    #[error("{url}: HTTP status {status}")]
    Status { url: String, status: u16 },
    #[error("{url}: timed out")]
    Timeout { url: String },
    #[error("{url}: {message}")]
    Transport { url: String, message: String },
    #[error("{url}: disallowed by robots.txt")]
    Disallowed { url: String },
}

#[async_trait]
pub trait Fetcher: Send + Sync {
    async fn fetch(&self, url: &Url) -> Result<Page, FetchError>;
}

#[async_trait]
impl<F: Fetcher + ?Sized> Fetcher for Arc<F> {
    async fn fetch(&self, url: &Url) -> Result<Page, FetchError> {
        (**self).fetch(url).await
    }
}

#[derive(Debug, Clone)]
pub struct HttpFetcherConfig {
    pub user_agent: String,
    pub timeout: Duration,
    /// Minimum gap between two requests to one host.
    pub per_host_delay: Duration,
    pub respect_robots: bool,
}

impl Default for HttpFetcherConfig {
    fn default() -> Self {
        Self {
            user_agent: DEFAULT_USER_AGENT.to_string(),
            timeout: Duration::from_secs(30),
            per_host_delay: Duration::from_secs(1),
            respect_robots: true,
        }
    }
}

type HostGate = Arc<Mutex<Option<Instant>>>;

pub struct HttpFetcher {
    client: reqwest::Client,
    config: HttpFetcherConfig,
    gates: std::sync::Mutex<HashMap<String, HostGate>>,
    robots: Mutex<HashMap<String, Option<Arc<texting_robots::Robot>>>>,
}

impl HttpFetcher {
    pub fn new(config: HttpFetcherConfig) -> reqwest::Result<Self> {
        let client = reqwest::Client::builder()
            .user_agent(config.user_agent.clone())
            .timeout(config.timeout)
            .build()?;
        Ok(Self {
            client,
            config,
            gates: Default::default(),
            robots: Default::default(),
        })
    }

    fn gate(&self, origin: &str) -> HostGate {
        self.gates
            .lock()
            .expect("gate map poisoned")
            .entry(origin.to_string())
            .or_default()
            .clone()
    }

    /// One request through the host gate: same-host requests are serialized
    /// and spaced by `per_host_delay`.
    async fn get(&self, url: &Url) -> Result<Page, FetchError> {
        let origin = url.origin().ascii_serialization();
        let gate = self.gate(&origin);
        let mut last = gate.lock().await;
        if let Some(prev) = *last {
            tokio::time::sleep_until(prev + self.config.per_host_delay).await;
        }
        let result = self.send(url).await;
        *last = Some(Instant::now());
        result
    }

    async fn send(&self, url: &Url) -> Result<Page, FetchError> {
        let map_err = |e: reqwest::Error| {
            if e.is_timeout() {
                FetchError::Timeout { url: url.to_string() }
            } else {
                FetchError::Transport {
                    url: url.to_string(),
                    message: e.to_string(),
                }
            }
        };
        let resp = self.client.get(url.clone()).send().await.map_err(map_err)?;
        let status = resp.status();
        if !status.is_success() {
            return Err(FetchError::Status {
                url: url.to_string(),
                status: status.as_u16(),
            });
        }
        let final_url = resp.url().clone();
        let content_type = resp
            .headers()
            .get(reqwest::header::CONTENT_TYPE)
            .and_then(|v| v.to_str().ok())
            .map(str::to_string);
        let body = resp.text().await.map_err(map_err)?;
        Ok(Page {
            url: final_url,
            content_type,
            body,
        })
    }

    async fn robot_for(&self, url: &Url) -> Option<Arc<texting_robots::Robot>> {
        let origin = url.origin().ascii_serialization();
        let mut cache = self.robots.lock().await;
        if let Some(robot) = cache.get(&origin) {
            return robot.clone();
        }
        let robots_url = Url::parse(&format!("{origin}/robots.txt")).ok()?;
        // Unreachable or missing robots.txt allows everything.
        let robot = match self.get(&robots_url).await {
            Ok(page) => texting_robots::Robot::new(&self.config.user_agent, page.body.as_bytes())
                .ok()
                .map(Arc::new),
            Err(e) => {
                tracing::debug!(%robots_url, error = %e, "robots.txt unavailable");
                None
            }
        };
        cache.insert(origin, robot.clone());
        robot
    }
}

#[async_trait]
impl Fetcher for HttpFetcher {
    async fn fetch(&self, url: &Url) -> Result<Page, FetchError> {
        if self.config.respect_robots {
            if let Some(robot) = self.robot_for(url).await {
                if !robot.allowed(url.as_str()) {
                    return Err(FetchError::Disallowed { url: url.to_string() });
                }
            }
        }
        self.get(url).await
    }
}

/// In-memory pages keyed by URL. Unknown URLs are 404s.
#[derive(Default)]
pub struct StaticFetcher {
    pages: HashMap<String, Page>,
    hits: AtomicUsize,
}

impl StaticFetcher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, page: Page) {
        self.pages.insert(page.url.to_string(), page);
    }

    pub fn with_html(mut self, url: &str, body: impl Into<String>) -> Self {
        self.insert(Page::html(Url::parse(url).expect("fixture url"), body));
        self
    }

    pub fn fetch_count(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }
}

#[async_trait]
impl Fetcher for StaticFetcher {
    async fn fetch(&self, url: &Url) -> Result<Page, FetchError> {
        self.hits.fetch_add(1, Ordering::Relaxed);
        self.pages.get(url.as_str()).cloned().ok_or(FetchError::Status {
            url: url.to_string(),
            status: 404,
        })
    }
}

#[derive(Debug, Error)]
pub enum DirFetcherError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad pages.csv: {0}")]
    Manifest(String),
}

/// Snapshot directory with a `pages.csv` (`url,path`) manifest; paths are
/// relative to the directory. `.html` files are served as HTML, anything else
/// as plain text.
pub struct DirFetcher {
    root: PathBuf,
    pages: HashMap<String, PathBuf>,
}

impl DirFetcher {
    pub fn open(root: &Path) -> Result<Self, DirFetcherError> {
        let manifest = root.join("pages.csv");
        let file = std::fs::File::open(&manifest).map_err(|source| DirFetcherError::Io {
            path: manifest.clone(),
            source,
        })?;
        let mut pages = HashMap::new();
        for row in csv::Reader::from_reader(file).deserialize::<(String, String)>() {
            let (url, path) = row.map_err(|e| DirFetcherError::Manifest(e.to_string()))?;
            let url = Url::parse(&url).map_err(|e| DirFetcherError::Manifest(format!("{url}: {e}")))?;
            pages.insert(url.to_string(), PathBuf::from(path));
        }
        Ok(Self {
            root: root.to_path_buf(),
            pages,
        })
    }
}

#[async_trait]
impl Fetcher for DirFetcher {
    async fn fetch(&self, url: &Url) -> Result<Page, FetchError> {
        let rel = self.pages.get(url.as_str()).ok_or(FetchError::Status {
            url: url.to_string(),
            status: 404,
        })?;
        let path = self.root.join(rel);
        let body = tokio::fs::read_to_string(&path)
            .await
            .map_err(|e| FetchError::Transport {
                url: url.to_string(),
                message: format!("{}: {e}", path.display()),
            })?;
        let content_type = match path.extension().and_then(|e| e.to_str()) {
            Some("html" | "htm") => "text/html; charset=utf-8",
            _ => "text/plain; charset=utf-8",
        };
        Ok(Page {
            url: url.clone(),
            content_type: Some(content_type.into()),
            body,
        })
    }
}
