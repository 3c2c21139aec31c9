//! Main-content extraction.
//!
//! Boilerplate subtrees (scripts, navigation, headers, footers, bylines, ...)
//! are dropped, the remaining paragraphs are grouped by their parent
//! element, and the parent holding the most paragraph text wins. Paragraphs
//! that are mostly link text do not count.

use scraper::node::Node;
use scraper::{ElementRef, Html, Selector};

/// Smallest main-content block accepted as an article.
pub const MIN_BLOCK_CHARS: usize = 200;
const MAX_LINK_DENSITY: f64 = 0.5;

const BOILERPLATE_TAGS: &[&str] = &[
    "script", "style", "noscript", "template", "nav", "header", "footer", "aside", "form",
    "iframe", "svg", "button", "select", "figure", "figcaption", "address", "menu", "dialog",
];

const BOILERPLATE_WORDS: &[&str] = &[
    "byline", "dateline", "author", "authors", "nav", "navigation", "navbar", "menu", "footer", "sidebar",
    "comment", "comments", "share", "sharing", "social", "related", "promo", "advert",
    "advertisement", "ad", "ads", "cookie", "cookies", "newsletter", "subscribe", "breadcrumb",
    "breadcrumbs", "caption", "credit", "credits", "masthead", "banner", "paywall",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extracted {
    pub title: Option<String>,
    pub body_text: String,
}

/// Collapses whitespace runs to one space and trims.
pub fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn has_boilerplate_marker(el: &scraper::node::Element) -> bool {
    if el.attr("rel").is_some_and(|r| r.eq_ignore_ascii_case("author")) {
        return true;
    }
    if el.attr("itemprop").is_some_and(|p| p.eq_ignore_ascii_case("author")) {
        return true;
    }
    if el.attr("aria-hidden") == Some("true") || el.attr("hidden").is_some() {
        return true;
    }
    let words = el
        .attr("class")
        .into_iter()
        .chain(el.attr("id"))
        .chain(el.attr("role"))
        .flat_map(|v| v.split(|c: char| !c.is_ascii_alphanumeric()))
        .map(|w| w.to_ascii_lowercase());
    for w in words {
        if BOILERPLATE_WORDS.contains(&w.as_str()) {
            return true;
        }
    }
    false
}

fn is_boilerplate(el: &scraper::node::Element) -> bool {
    BOILERPLATE_TAGS.contains(&el.name()) || has_boilerplate_marker(el)
}

/// Text of a paragraph, minus boilerplate descendants, plus how many of its
/// characters sit inside links.
fn paragraph_text(p: ElementRef<'_>) -> (String, usize) {
    fn walk(node: ego_tree::NodeRef<'_, Node>, in_link: bool, text: &mut String, link_chars: &mut usize) {
        match node.value() {
            Node::Text(t) => {
                text.push_str(t);
                if in_link {
                    *link_chars += t.chars().filter(|c| !c.is_whitespace()).count();
                }
            }
            Node::Element(el) => {
                if is_boilerplate(el) {
                    return;
                }
                let in_link = in_link || el.name() == "a";
                if el.name() == "br" {
                    text.push(' ');
                }
                for child in node.children() {
                    walk(child, in_link, text, link_chars);
                }
            }
            _ => {}
        }
    }
    let mut text = String::new();
    let mut link_chars = 0;
    for child in p.children() {
        walk(child, false, &mut text, &mut link_chars);
    }
    (normalize_whitespace(&text), link_chars)
}

struct Block {
    parent: ego_tree::NodeId,
    paragraphs: Vec<String>,
    chars: usize,
}

fn collect_paragraphs(node: ego_tree::NodeRef<'_, Node>, blocks: &mut Vec<Block>) {
    for child in node.children() {
        let Node::Element(el) = child.value() else {
            continue;
        };
        if is_boilerplate(el) {
            continue;
        }
        if matches!(el.name(), "p" | "pre" | "blockquote") && !contains_paragraph(child) {
            let (text, link_chars) = paragraph_text(ElementRef::wrap(child).expect("element"));
            let visible = text.chars().filter(|c| !c.is_whitespace()).count();
            if visible == 0 || link_chars as f64 > MAX_LINK_DENSITY * visible as f64 {
                continue;
            }
            let parent = node.id();
            let len = text.chars().count();
            match blocks.iter_mut().find(|b| b.parent == parent) {
                Some(b) => {
                    b.chars += len;
                    b.paragraphs.push(text);
                }
                None => blocks.push(Block {
                    parent,
                    paragraphs: vec![text],
                    chars: len,
                }),
            }
        } else {
            collect_paragraphs(child, blocks);
        }
    }
}

fn contains_paragraph(node: ego_tree::NodeRef<'_, Node>) -> bool {
    node.descendants()
        .skip(1)
        .any(|d| matches!(d.value(), Node::Element(e) if e.name() == "p"))
}

fn first_text(doc: &Html, selector: &str) -> Option<String> {
    let sel = Selector::parse(selector).expect("static selector");
    doc.select(&sel)
        .map(|el| normalize_whitespace(&el.text().collect::<String>()))
        .find(|t| !t.is_empty())
}

fn extract_title(doc: &Html) -> Option<String> {
    first_text(doc, "h1").or_else(|| {
        let sel = Selector::parse("meta[property=\"og:title\"]").expect("static selector");
        doc.select(&sel)
            .filter_map(|m| m.value().attr("content"))
            .map(normalize_whitespace)
            .find(|t| !t.is_empty())
            .or_else(|| first_text(doc, "title"))
    })
}

/// Paragraphs of the densest block joined by blank lines, or `None` when no
/// block reaches [`MIN_BLOCK_CHARS`].
pub fn extract_main_content(html: &str) -> Option<Extracted> {
    let doc = Html::parse_document(html);
    let mut blocks = Vec::new();
    collect_paragraphs(doc.tree.root(), &mut blocks);
    // first block wins ties, so the result does not depend on iteration quirks
    let best = blocks.into_iter().reduce(|best, b| if b.chars > best.chars { b } else { best })?;
    let body_text = best.paragraphs.join("\n\n");
    if body_text.chars().count() < MIN_BLOCK_CHARS {
        return None;
    }
    Some(Extracted {
        title: extract_title(&doc),
        body_text,
    })
}
