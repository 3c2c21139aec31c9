//! Article harvesting: homepage links, longest-URL selection, main-content
//! extraction and length filtering.

mod extract;
mod fetch;
mod links;
pub mod synthetic;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use url::Url;

use crate::clock::Clock;
use crate::registry::{NewspaperSource, RunParameters};

pub use extract::{extract_main_content, normalize_whitespace, Extracted, MIN_BLOCK_CHARS};
pub use fetch::{
    DirFetcher, DirFetcherError, FetchError, Fetcher, HttpFetcher, HttpFetcherConfig, Page, StaticFetcher,
    DEFAULT_USER_AGENT,
};
pub use links::{extract_hyperlinks, normalize_url};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum HarvestError {
    #[error("fetch failed: {0}")]
    Fetch(#[from] FetchError),
    #[error("{url}: not HTML (content type {content_type:?})")]
    NotHtml { url: String, content_type: String },
    #[error("{url}: no article content found")]
    ExtractionEmpty { url: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateUrl {
    pub url: Url,
    /// Unicode scalar count of `url`.
    pub char_length: usize,
    pub discovered_from: Url,
}

impl CandidateUrl {
    pub fn new(url: Url, discovered_from: Url) -> Self {
        let char_length = url.as_str().chars().count();
        Self {
            url,
            char_length,
            discovered_from,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticleRecord {
    /// Derived from the body text, so re-fetching identical text gives the same id.
    pub id: String,
    pub newspaper_id: String,
    pub url: Url,
    pub title: Option<String>,
    pub body_text: String,
    pub char_length: usize,
    pub fetched_at: DateTime<Utc>,
}

/// First 16 hex digits of the SHA-256 of the body text.
pub fn article_id(body_text: &str) -> String {
    let digest = Sha256::digest(body_text.as_bytes());
    hex::encode(&digest[..8])
}

impl ArticleRecord {
    pub fn new(
        newspaper_id: &str,
        url: Url,
        title: Option<String>,
        body_text: String,
        fetched_at: DateTime<Utc>,
    ) -> Self {
        Self {
            id: article_id(&body_text),
            newspaper_id: newspaper_id.to_string(),
            url,
            title,
            char_length: body_text.chars().count(),
            body_text,
            fetched_at,
        }
    }
}

fn require_html(page: &Page) -> Result<(), HarvestError> {
    if page.is_html() {
        Ok(())
    } else {
        Err(HarvestError::NotHtml {
            url: page.url.to_string(),
            content_type: page.content_type.clone().unwrap_or_default(),
        })
    }
}

pub async fn scrape_hyperlinks(
    fetcher: &dyn Fetcher,
    homepage: &Url,
    max_links: usize,
) -> Result<Vec<CandidateUrl>, HarvestError> {
    let page = fetcher.fetch(homepage).await?;
    require_html(&page)?;
    let mut links = extract_hyperlinks(&page.body, &page.url, max_links);
    // candidates record the homepage as listed, even after a redirect
    for c in &mut links {
        c.discovered_from = homepage.clone();
    }
    Ok(links)
}

/// The `select` longest candidates, longest first; equal lengths are ordered
/// by URL so the choice is deterministic.
pub fn select_longest_urls(candidates: &[CandidateUrl], select: usize) -> Vec<CandidateUrl> {
    let mut sorted: Vec<&CandidateUrl> = candidates.iter().collect();
    sorted.sort_by(|a, b| {
        b.char_length
            .cmp(&a.char_length)
            .then_with(|| a.url.as_str().cmp(b.url.as_str()))
    });
    sorted.into_iter().take(select).cloned().collect()
}

pub async fn extract_article(
    fetcher: &dyn Fetcher,
    url: &Url,
    newspaper_id: &str,
    clock: &dyn Clock,
) -> Result<ArticleRecord, HarvestError> {
    let page = fetcher.fetch(url).await?;
    require_html(&page)?;
    let extracted = extract_main_content(&page.body).ok_or_else(|| HarvestError::ExtractionEmpty {
        url: url.to_string(),
    })?;
    Ok(ArticleRecord::new(
        newspaper_id,
        url.clone(),
        extracted.title,
        extracted.body_text,
        clock.now(),
    ))
}

/// Records with `min_chars <= char_length <= max_chars`, order preserved.
pub fn filter_by_length(articles: Vec<ArticleRecord>, min_chars: usize, max_chars: usize) -> Vec<ArticleRecord> {
    articles
        .into_iter()
        .filter(|a| (min_chars..=max_chars).contains(&a.char_length))
        .collect()
}

/// Everything one harvest of one homepage produced.
#[derive(Debug, Clone, Default)]
pub struct Harvest {
    pub candidates: Vec<CandidateUrl>,
    pub selected: Vec<CandidateUrl>,
    pub extracted: Vec<ArticleRecord>,
    /// Extracted articles within the length bounds, in selection order.
    pub pool: Vec<ArticleRecord>,
    pub failures: Vec<(Url, HarvestError)>,
}

/// Scrape, select, extract and filter one newspaper. Only a homepage failure
/// is an error; per-article failures are collected in [`Harvest::failures`].
pub async fn harvest_newspaper(
    fetcher: &dyn Fetcher,
    source: &NewspaperSource,
    params: &RunParameters,
    clock: &dyn Clock,
) -> Result<Harvest, HarvestError> {
    let candidates = scrape_hyperlinks(fetcher, &source.homepage_url, params.max_links).await?;
    let selected = select_longest_urls(&candidates, params.select);
    let mut extracted = Vec::new();
    let mut failures = Vec::new();
    for c in &selected {
        match extract_article(fetcher, &c.url, &source.id, clock).await {
            Ok(a) => extracted.push(a),
            Err(e) => {
                tracing::debug!(newspaper = %source.id, url = %c.url, error = %e, "article skipped");
                failures.push((c.url.clone(), e));
            }
        }
    }
    let pool = filter_by_length(extracted.clone(), params.min_chars, params.max_chars);
    Ok(Harvest {
        candidates,
        selected,
        extracted,
        pool,
        failures,
    })
}
