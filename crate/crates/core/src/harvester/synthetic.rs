//! A generated newspaper web for offline runs.
//!
//! Any homepage URL (`/` path) serves a front page whose article links are
//! dated with the simulated day, so each day brings fresh articles. Article
//! pages are generated from a hash of their URL: most bodies fall inside the
//! default length window, some are too short, some too long, and one slot per
//! front page is a link-only listing page that extraction rejects.

use async_trait::async_trait;
use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use url::Url;

use super::fetch::{FetchError, Fetcher, Page};

const SECTIONS: &[&str] = &[
    "politics", "economy", "world", "business", "opinion", "society", "culture", "science",
];

const SHORT_LINKS: &[&str] = &[
    "/sport", "/economy", "/politics", "/world", "/culture", "/opinion", "/video", "/tech",
    "/science", "/health", "/travel", "/about", "/contact", "/weather",
];

const WORDS: &[&str] = &[
    "government", "parliament", "minister", "budget", "taxes", "reform", "election", "voters",
    "market", "inflation", "wages", "workers", "union", "industry", "trade", "policy",
    "healthcare", "schools", "housing", "energy", "climate", "security", "border", "court",
    "rights", "freedom", "regulation", "subsidies", "pension", "debt", "growth", "investment",
    "coalition", "opposition", "protest", "campaign", "council", "region", "citizens", "press",
    "économie", "política", "Bürger", "società", "ekonomi", "κυβέρνηση", "सरकार", "hükümet",
    "the", "a", "of", "and", "to", "in", "on", "for", "with", "against", "after", "before",
    "said", "announced", "criticised", "welcomed", "proposed", "rejected", "approved",
    "warned", "argued", "promised", "questioned", "defended", "supported", "opposed",
];

const ARTICLE_SLOTS: usize = 24;

/// Length class of a generated article page.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PageKind {
    Article { target_chars: usize },
    Listing,
}

#[derive(Debug, Clone)]
pub struct SyntheticWeb {
    date: NaiveDate,
    seed: u64,
}

impl SyntheticWeb {
    pub fn new(date: NaiveDate, seed: u64) -> Self {
        Self { date, seed }
    }

    pub fn date(&self) -> NaiveDate {
        self.date
    }

    fn rng(&self, parts: &[&[u8]]) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        for p in parts {
            h.update((p.len() as u64).to_le_bytes());
            h.update(p);
        }
        ChaCha8Rng::from_seed(h.finalize().into())
    }

    fn words(rng: &mut ChaCha8Rng, n: usize) -> Vec<&'static str> {
        (0..n).map(|_| *WORDS.choose(rng).expect("nonempty")).collect()
    }

    fn front_page(&self, url: &Url) -> String {
        let host = url.host_str().unwrap_or_default();
        let day = self.date.format("%Y-%m-%d").to_string();
        let mut rng = self.rng(&[b"front", host.as_bytes(), day.as_bytes()]);
        let date_path = self.date.format("%Y/%m/%d").to_string();

        let mut items = Vec::new();
        for slot in 0..ARTICLE_SLOTS {
            let section = SECTIONS.choose(&mut rng).expect("nonempty");
            let n = rng.gen_range(5..=9);
            let slug: Vec<String> = Self::words(&mut rng, n)
                .iter()
                .map(|w| crate::registry::slugify(w))
                .filter(|w| !w.is_empty())
                .collect();
            let id: u32 = rng.gen();
            let kind = if slot == 11 { "l" } else { "a" };
            let href = format!("/{date_path}/{section}/{}-{kind}{slot:02}{id:08x}", slug.join("-"));
            let headline = slug.join(" ");
            items.push(format!("<li><a href=\"{href}\">{headline}</a></li>"));
            if slot % 5 == 0 {
                // repeated teaser link and an in-page comments anchor
                items.push(format!("<li><a href=\"{href}#comments\">comments</a></li>"));
            }
        }
        let nav: String = SHORT_LINKS
            .iter()
            .map(|l| format!("<a href=\"{l}\">{}</a> ", l.trim_start_matches('/')))
            .collect();
        format!(
            "<!doctype html><html><head><title>{host}</title></head><body>\
             <nav>{nav}<a href=\"#top\">top</a> <a href=\"mailto:desk@{host}\">contact</a></nav>\
             <main><h1>{host} | {day}</h1><ul>{}</ul></main>\
             <footer><a href=\"/privacy\">privacy</a> <a href=\"https://social.example/{host}\">follow</a></footer>\
             </body></html>",
            items.join("")
        )
    }

    fn page_kind(&self, url: &Url, rng: &mut ChaCha8Rng) -> PageKind {
        let last = url.path_segments().and_then(|mut s| s.next_back()).unwrap_or_default();
        // the slug ends with `-<kind><slot:02><id:08x>`
        let tail = last.rsplit('-').next().unwrap_or_default();
        if tail.starts_with('l') {
            return PageKind::Listing;
        }
        let slot: usize = tail.get(1..3).and_then(|s| s.parse().ok()).unwrap_or(0);
        let target_chars = match slot % 8 {
            3 => rng.gen_range(300..900),
            6 => rng.gen_range(5_600..8_000),
            _ => rng.gen_range(1_200..4_600),
        };
        PageKind::Article { target_chars }
    }

    fn article_page(&self, url: &Url) -> String {
        let mut rng = self.rng(&[b"article", url.as_str().as_bytes()]);
        let host = url.host_str().unwrap_or_default();
        match self.page_kind(url, &mut rng) {
            PageKind::Listing => {
                let items: String = (0..30)
                    .map(|i| {
                        let w = Self::words(&mut rng, 6).join(" ");
                        format!("<li><p><a href=\"/more/{i}\">{w}</a></p></li>")
                    })
                    .collect();
                format!("<html><head><title>Listing</title></head><body><h1>Latest</h1><ul>{items}</ul></body></html>")
            }
            PageKind::Article { target_chars } => {
                let title = Self::words(&mut rng, 7).join(" ");
                let mut paragraphs = Vec::new();
                let mut total = 0;
                while total < target_chars {
                    let sentences = rng.gen_range(2..6);
                    let mut p = Vec::new();
                    for _ in 0..sentences {
                        let n = rng.gen_range(6..18);
                        let mut s = Self::words(&mut rng, n).join(" ");
                        if let Some(first) = s.get(..1) {
                            let upper = first.to_uppercase();
                            s.replace_range(..1, &upper);
                        }
                        s.push('.');
                        p.push(s);
                    }
                    let p = p.join(" ");
                    total += p.chars().count() + 2;
                    paragraphs.push(p);
                }
                let body: String = paragraphs.iter().map(|p| format!("<p>{p}</p>\n")).collect();
                let author = ["Ana Silva", "Jan Peeters", "Maria Rossi", "Li Wei"].choose(&mut rng).expect("nonempty");
                format!(
                    "<!doctype html><html><head><title>{title} | {host}</title>\
                     <script>window.dataLayer = [];</script></head><body>\
                     <header><nav><a href=\"/\">home</a></nav></header>\
                     <article><h1>{title}</h1><p class=\"byline\">By {author}</p>\n{body}</article>\
                     <aside class=\"related\"><p><a href=\"/x\">related story</a></p></aside>\
                     <footer><p>© {host}</p></footer></body></html>"
                )
            }
        }
    }
}

#[async_trait]
impl Fetcher for SyntheticWeb {
    async fn fetch(&self, url: &Url) -> Result<Page, FetchError> {
        let path = url.path();
        let body = if path == "/" || path.is_empty() {
            self.front_page(url)
        } else if path.split('/').filter(|s| !s.is_empty()).count() >= 5 {
            self.article_page(url)
        } else {
            return Err(FetchError::Status {
                url: url.to_string(),
                status: 404,
            });
        };
        Ok(Page::html(url.clone(), body))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;
    use crate::harvester::harvest_newspaper;
    use crate::registry::{shipped_registry, RunParameters};

    #[tokio::test]
    async fn every_shipped_newspaper_yields_a_full_pool() {
        let params = RunParameters::default();
        let date = NaiveDate::from_ymd_opt(2024, 5, 9).unwrap();
        let clock = ManualClock::at_midnight(date);
        for day in 0..5 {
            let web = SyntheticWeb::new(date + chrono::Days::new(day), 0);
            for source in shipped_registry() {
                let h = harvest_newspaper(&web, &source, &params, &clock).await.unwrap();
                assert_eq!(h.selected.len(), params.select);
                assert!(h.pool.len() >= params.articles_per_day, "{} day {day}: {}", source.id, h.pool.len());
                assert!(h.pool.len() < h.selected.len(), "filter should drop some pages");
            }
        }
    }

    #[tokio::test]
    async fn deterministic_and_day_dependent() {
        let home = Url::parse("https://www.example.com/").unwrap();
        let d1 = NaiveDate::from_ymd_opt(2024, 5, 9).unwrap();
        let a = SyntheticWeb::new(d1, 7).fetch(&home).await.unwrap().body;
        let b = SyntheticWeb::new(d1, 7).fetch(&home).await.unwrap().body;
        let c = SyntheticWeb::new(d1.succ_opt().unwrap(), 7).fetch(&home).await.unwrap().body;
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
