use std::collections::HashSet;

use scraper::{Html, Selector};
use url::Url;

use super::CandidateUrl;

/// Lower-cases scheme and host (the URL parser already does) and drops the
/// fragment. Query strings are kept: some sites put article ids there.
pub fn normalize_url(url: &Url) -> Url {
    let mut url = url.clone();
    url.set_fragment(None);
    url
}

/// Up to `max_links` unique absolute http(s) links in document order.
///
/// Duplicates are removed before the cap is applied. Pure in-page fragment
/// links (`href="#..."`) and non-web schemes are skipped.
pub fn extract_hyperlinks(html: &str, page_url: &Url, max_links: usize) -> Vec<CandidateUrl> {
    let doc = Html::parse_document(html);
    let base_sel = Selector::parse("base[href]").expect("static selector");
    let base = doc
        .select(&base_sel)
        .next()
        .and_then(|b| b.value().attr("href"))
        .and_then(|href| page_url.join(href.trim()).ok())
        .unwrap_or_else(|| page_url.clone());

    let anchor_sel = Selector::parse("a[href]").expect("static selector");
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for a in doc.select(&anchor_sel) {
        if out.len() >= max_links {
            break;
        }
        let href = a.value().attr("href").unwrap_or_default().trim();
        if href.is_empty() || href.starts_with('#') {
            continue;
        }
        let Ok(resolved) = base.join(href) else {
            continue;
        };
        if !matches!(resolved.scheme(), "http" | "https") {
            continue;
        }
        let url = normalize_url(&resolved);
        if seen.insert(url.to_string()) {
            out.push(CandidateUrl::new(url, page_url.clone()));
        }
    }
    out
}
