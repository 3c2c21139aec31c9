//! Newspaper sources, model specifications and run parameters.
//!
//! The source list is a flat CSV (`Country,Newspaper,Homepage,Positioning,SourceNote`);
//! models and run parameters come from a TOML document with a `[run.params]`
//! table and one `[[models]]` block per model. Everything here is immutable
//! once loaded.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

pub const REGISTRY_HEADER: [&str; 5] = ["Country", "Newspaper", "Homepage", "Positioning", "SourceNote"];

/// The 40-newspaper registry shipped with the crate.
pub const SHIPPED_REGISTRY: &str = include_str!("../data/sources.csv");
/// Reference-only list of every newspaper initially considered (152 rows).
pub const CANDIDATE_POOL: &str = include_str!("../data/candidate_pool.csv");
/// Built-in configuration: paper-table run parameters plus the model set.
pub const DEFAULT_CONFIG: &str = include_str!("../data/default.toml");

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad header: expected {expected:?}, found {found:?}")]
    BadHeader { expected: Vec<String>, found: Vec<String> },
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("duplicate newspaper id {0:?}")]
    DuplicateId(String),
    #[error("unknown model {0:?}")]
    UnknownModel(String),
    #[error("model id {0:?} is defined more than once")]
    AmbiguousModel(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid run parameters: {0}")]
    InvalidParameters(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PositioningLabel {
    Right,
    CentreRight,
    Centre,
    CentreLeft,
    Left,
    Independent,
    Unknown,
}

impl PositioningLabel {
    pub const ALL: [PositioningLabel; 7] = [
        Self::Right,
        Self::CentreRight,
        Self::Centre,
        Self::CentreLeft,
        Self::Left,
        Self::Independent,
        Self::Unknown,
    ];

    /// Form written to CSV. Unknown positioning is written as `-`.
    pub fn as_csv(&self) -> &'static str {
        match self {
            Self::Right => "Right",
            Self::CentreRight => "Centre-right",
            Self::Centre => "Centre",
            Self::CentreLeft => "Centre-left",
            Self::Left => "Left",
            Self::Independent => "Independent",
            Self::Unknown => "-",
        }
    }
}

impl fmt::Display for PositioningLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_csv())
    }
}

#[derive(Debug, Error)]
#[error("unrecognised positioning label {0:?}")]
pub struct LabelParseError(pub String);

impl FromStr for PositioningLabel {
    type Err = LabelParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let label = match s.trim().to_ascii_lowercase().as_str() {
            "right" => Self::Right,
            "centre-right" | "centreright" => Self::CentreRight,
            "centre" => Self::Centre,
            "centre-left" | "centreleft" => Self::CentreLeft,
            "left" => Self::Left,
            "independent" => Self::Independent,
            "unknown" | "-" | "-*" => Self::Unknown,
            _ => return Err(LabelParseError(s.to_string())),
        };
        Ok(label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewspaperSource {
    pub id: String,
    pub country: String,
    pub name: String,
    pub homepage_url: Url,
    pub positioning: PositioningLabel,
    pub source_note: String,
}

/// Lower-case ASCII slug of a display name: `"Libération"` becomes `"liberation"`.
pub fn slugify(name: &str) -> String {
    let ascii = deunicode::deunicode(name).to_ascii_lowercase();
    let mut slug = String::with_capacity(ascii.len());
    for c in ascii.chars() {
        if c.is_ascii_alphanumeric() {
            slug.push(c);
        } else if !slug.is_empty() && !slug.ends_with('-') {
            slug.push('-');
        }
    }
    while slug.ends_with('-') {
        slug.pop();
    }
    slug
}

fn is_country_code(s: &str) -> bool {
    s.len() == 3 && s.bytes().all(|b| b.is_ascii_uppercase())
}

pub fn parse_http_url(raw: &str) -> Result<Url, String> {
    let url = Url::parse(raw.trim()).map_err(|e| format!("invalid url {raw:?}: {e}"))?;
    match url.scheme() {
        "http" | "https" if url.host().is_some() => Ok(url),
        _ => Err(format!("not an absolute http(s) url: {raw:?}")),
    }
}

#[derive(Debug, Deserialize)]
struct RegistryRow {
    #[serde(rename = "Country")]
    country: String,
    #[serde(rename = "Newspaper")]
    newspaper: String,
    #[serde(rename = "Homepage")]
    homepage: String,
    #[serde(rename = "Positioning")]
    positioning: String,
    #[serde(rename = "SourceNote", default)]
    source_note: String,
}

pub fn load_registry(path: &Path) -> Result<Vec<NewspaperSource>, RegistryError> {
    let file = std::fs::File::open(path).map_err(|source| RegistryError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_registry(file)
}

pub fn shipped_registry() -> Vec<NewspaperSource> {
    parse_registry(SHIPPED_REGISTRY.as_bytes()).expect("shipped registry is valid")
}

pub fn parse_registry<R: Read>(reader: R) -> Result<Vec<NewspaperSource>, RegistryError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| RegistryError::MalformedRow { line: 1, reason: e.to_string() })?
        .clone();
    let found: Vec<String> = header.iter().map(|h| h.trim().to_string()).collect();
    if found != REGISTRY_HEADER {
        return Err(RegistryError::BadHeader {
            expected: REGISTRY_HEADER.iter().map(|s| s.to_string()).collect(),
            found,
        });
    }

    let mut seen = HashSet::new();
    let mut sources = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| RegistryError::MalformedRow {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let malformed = |reason: String| RegistryError::MalformedRow { line, reason };
        let row: RegistryRow = record
            .deserialize(Some(&header))
            .map_err(|e| malformed(e.to_string()))?;

        let country = row.country.trim().to_string();
        if !is_country_code(&country) {
            return Err(malformed(format!("country {country:?} is not an ISO alpha-3 code")));
        }
        let name = row.newspaper.trim().to_string();
        let id = slugify(&name);
        if id.is_empty() {
            return Err(malformed(format!("newspaper name {name:?} yields an empty id")));
        }
        let homepage_url = parse_http_url(&row.homepage).map_err(malformed)?;
        let positioning = row
            .positioning
            .parse::<PositioningLabel>()
            .map_err(|e| malformed(e.to_string()))?;
        if !seen.insert(id.clone()) {
            return Err(RegistryError::DuplicateId(id));
        }
        sources.push(NewspaperSource {
            id,
            country,
            name,
            homepage_url,
            positioning,
            source_note: row.source_note.trim().to_string(),
        });
    }
    Ok(sources)
}

pub fn write_registry<W: Write>(writer: W, sources: &[NewspaperSource]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(REGISTRY_HEADER)?;
    for s in sources {
        wtr.write_record([
            s.country.as_str(),
            s.name.as_str(),
            display_url(&s.homepage_url),
            s.positioning.as_csv(),
            s.source_note.as_str(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Bare origins are written without the trailing slash the URL parser adds.
fn display_url(url: &Url) -> &str {
    let s = url.as_str();
    if url.path() == "/" && url.query().is_none() && url.fragment().is_none() {
        s.strip_suffix('/').unwrap_or(s)
    } else {
        s
    }
}

/// JSON mirror of the registry. Generated from the CSV, never edited by hand.
pub fn registry_to_json(sources: &[NewspaperSource]) -> String {
    let mut out = serde_json::to_string_pretty(sources).expect("sources serialize");
    out.push('\n');
    out
}

/// Count of sources per label. Every label is present, absent ones map to 0.
pub fn positioning_counts(sources: &[NewspaperSource]) -> BTreeMap<PositioningLabel, usize> {
    let mut counts: BTreeMap<_, _> = PositioningLabel::ALL.iter().map(|l| (*l, 0)).collect();
    for s in sources {
        *counts.entry(s.positioning).or_insert(0) += 1;
    }
    counts
}

pub fn distinct_countries(sources: &[NewspaperSource]) -> usize {
    sources.iter().map(|s| s.country.as_str()).collect::<HashSet<_>>().len()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProviderKind {
    #[serde(rename = "openai-style")]
    OpenAiStyle,
    #[serde(rename = "google-style")]
    GoogleStyle,
    #[serde(rename = "mock")]
    Mock,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub id: String,
    pub provider: ProviderKind,
    pub endpoint: Url,
    /// Model name sent to the provider, when it differs from `id`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_model: Option<String>,
    pub input_token_cost: Decimal,
    pub output_token_cost: Decimal,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub daily_request_quota: Option<u32>,
    #[serde(rename = "request_timeout_secs", with = "secs")]
    pub request_timeout: Duration,
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<(), RegistryError> {
        let bad = |m: String| Err(RegistryError::InvalidConfig(format!("model {:?}: {m}", self.id)));
        if self.id.is_empty() {
            return bad("empty id".into());
        }
        if self.input_token_cost.is_sign_negative() || self.output_token_cost.is_sign_negative() {
            return bad("token costs must be nonnegative".into());
        }
        if self.daily_request_quota == Some(0) {
            return bad("daily_request_quota must be at least 1".into());
        }
        if self.request_timeout.is_zero() {
            return bad("request timeout must be positive".into());
        }
        Ok(())
    }

    /// Environment variable holding this model's API key.
    pub fn api_key_var(&self) -> String {
        let id: String = self
            .id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_uppercase() } else { '_' })
            .collect();
        format!("PROVIDER_{id}_KEY")
    }

    pub fn provider_model(&self) -> &str {
        self.api_model.as_deref().unwrap_or(&self.id)
    }
}

pub fn resolve_model<'a>(id: &str, specs: &'a [ModelSpec]) -> Result<&'a ModelSpec, RegistryError> {
    let mut matches = specs.iter().filter(|s| s.id == id);
    let first = matches.next().ok_or_else(|| RegistryError::UnknownModel(id.to_string()))?;
    if matches.next().is_some() {
        return Err(RegistryError::AmbiguousModel(id.to_string()));
    }
    Ok(first)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunParameters {
    /// N: hyperlinks kept per homepage.
    pub max_links: usize,
    /// S: longest URLs selected for extraction.
    pub select: usize,
    /// MIN: shortest accepted article, in characters.
    pub min_chars: usize,
    /// MAX: longest accepted article, in characters.
    pub max_chars: usize,
    /// A: valid evaluations per newspaper per day.
    pub articles_per_day: usize,
    pub days: u32,
}

impl Default for RunParameters {
    fn default() -> Self {
        Self {
            max_links: 200,
            select: 20,
            min_chars: 1000,
            max_chars: 5000,
            articles_per_day: 5,
            days: 5,
        }
    }
}

impl RunParameters {
    pub fn validate(&self) -> Result<(), RegistryError> {
        let bad = |m: &str| Err(RegistryError::InvalidParameters(m.to_string()));
        if self.max_links == 0 || self.select == 0 || self.min_chars == 0 || self.days == 0 {
            return bad("max_links, select, min_chars and days must be at least 1");
        }
        if self.articles_per_day == 0 {
            return bad("articles_per_day must be at least 1");
        }
        if self.select > self.max_links {
            return bad("select (S) must not exceed max_links (N)");
        }
        if self.min_chars >= self.max_chars {
            return bad("min_chars (MIN) must be below max_chars (MAX)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub params: RunParameters,
    pub models: Vec<ModelSpec>,
}

#[derive(Deserialize)]
struct RawConfig {
    #[serde(default)]
    run: RawRun,
    #[serde(default)]
    models: Vec<ModelSpec>,
}

#[derive(Deserialize, Default)]
struct RawRun {
    #[serde(default)]
    params: RunParameters,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, RegistryError> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| RegistryError::InvalidConfig(e.to_string()))?;
        let config = Config {
            params: raw.run.params,
            models: raw.models,
        };
        config.params.validate()?;
        let mut ids = HashSet::new();
        for m in &config.models {
            m.validate()?;
            if !ids.insert(m.id.as_str()) {
                return Err(RegistryError::AmbiguousModel(m.id.clone()));
            }
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        let text = std::fs::read_to_string(path).map_err(|source| RegistryError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn builtin() -> Self {
        Self::parse(DEFAULT_CONFIG).expect("built-in config is valid")
    }

    pub fn model(&self, id: &str) -> Result<&ModelSpec, RegistryError> {
        resolve_model(id, &self.models)
    }
}
