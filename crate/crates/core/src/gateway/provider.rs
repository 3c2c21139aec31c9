//! Provider back-ends behind one completion interface.

use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Duration;

use async_trait::async_trait;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::prompt::Prompt;
use crate::registry::ModelSpec;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

/// Outcome of one failed provider call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CallError {
    /// Timeouts, 429s, 5xx and connection failures: worth retrying.
    Transient {
        status: Option<u16>,
        retry_after: Option<Duration>,
        message: String,
    },
    Timeout,
    /// Anything a retry will not fix (bad request, auth, unparseable body).
    Permanent { status: Option<u16>, message: String },
}

impl CallError {
    fn from_status(status: u16, retry_after: Option<Duration>, body: String) -> Self {
        if status == 429 || status >= 500 {
            CallError::Transient {
                status: Some(status),
                retry_after,
                message: body,
            }
        } else {
            CallError::Permanent {
                status: Some(status),
                message: body,
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            CallError::Transient { status: Some(s), .. } | CallError::Permanent { status: Some(s), .. } => {
                format!("status:{s}")
            }
            CallError::Transient { .. } => "transport".into(),
            CallError::Permanent { .. } => "invalid".into(),
            CallError::Timeout => "timeout".into(),
        }
    }
}

#[async_trait]
pub trait Provider: Send + Sync {
    async fn complete(&self, spec: &ModelSpec, prompt: &Prompt, api_key: Option<&str>) -> Result<Completion, CallError>;
}

/// Scores in [-10, 10] on both axes from a hash of (body, seed).
pub fn mock_scores(article_body: &str, seed: u64) -> (i32, i32) {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(article_body.as_bytes());
    let digest = h.finalize();
    let word = |i: usize| u64::from_le_bytes(digest[i..i + 8].try_into().expect("8 bytes"));
    let axis = |w: u64| (w % 21) as i32 - 10;
    (axis(word(0)), axis(word(8)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockMode {
    /// Always `[0, 0]`.
    Fixed,
    /// Seeded hash of the article body.
    Hash { seed: u64 },
}

impl MockMode {
    /// `mock://fixed` or `mock://hash`.
    pub fn from_spec(spec: &ModelSpec, seed: u64) -> Option<Self> {
        match spec.endpoint.host_str() {
            Some("fixed") => Some(MockMode::Fixed),
            Some("hash") => Some(MockMode::Hash { seed }),
            _ => None,
        }
    }
}

pub struct MockProvider {
    seed: u64,
}

impl MockProvider {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }
}

#[async_trait]
impl Provider for MockProvider {
    async fn complete(&self, spec: &ModelSpec, prompt: &Prompt, _api_key: Option<&str>) -> Result<Completion, CallError> {
        let text = match MockMode::from_spec(spec, self.seed) {
            Some(MockMode::Fixed) => "[0, 0]".to_string(),
            Some(MockMode::Hash { seed }) => {
                let (e, d) = mock_scores(prompt.article_body(), seed);
                format!("[{e}, {d}]")
            }
            None => {
                return Err(CallError::Permanent {
                    status: None,
                    message: format!("unknown mock endpoint {}", spec.endpoint),
                })
            }
        };
        Ok(Completion {
            text,
            input_tokens: 0,
            output_tokens: 0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptStep {
    Reply(String),
    Status(u16),
    Timeout,
}

/// Replays a fixed sequence of outcomes, then repeats the fallback forever.
/// Meant for tests of retry and batch semantics.
pub struct ScriptedProvider {
    steps: Mutex<VecDeque<ScriptStep>>,
    fallback: ScriptStep,
    calls: Mutex<Vec<String>>,
}

impl ScriptedProvider {
    pub fn new(steps: impl IntoIterator<Item = ScriptStep>, fallback: ScriptStep) -> Self {
        Self {
            steps: Mutex::new(steps.into_iter().collect()),
            fallback,
            calls: Mutex::new(Vec::new()),
        }
    }

    /// Article bodies seen, one per call.
    pub fn calls(&self) -> Vec<String> {
        self.calls.lock().expect("poisoned").clone()
    }
}

#[async_trait]
impl Provider for ScriptedProvider {
    async fn complete(&self, _spec: &ModelSpec, prompt: &Prompt, _api_key: Option<&str>) -> Result<Completion, CallError> {
        self.calls.lock().expect("poisoned").push(prompt.article_body().to_string());
        let step = self
            .steps
            .lock()
            .expect("poisoned")
            .pop_front()
            .unwrap_or_else(|| self.fallback.clone());
        match step {
            ScriptStep::Reply(text) => Ok(Completion {
                text,
                input_tokens: prompt.text.split_whitespace().count() as u64,
                output_tokens: 4,
            }),
            ScriptStep::Status(s) => Err(CallError::from_status(s, None, String::new())),
            ScriptStep::Timeout => Err(CallError::Timeout),
        }
    }
}

/// Chat-completion JSON APIs (`openai-style` and `google-style`).
pub struct HttpProvider {
    client: reqwest::Client,
}

impl HttpProvider {
    pub fn new(client: reqwest::Client) -> Self {
        Self { client }
    }

    fn request(&self, spec: &ModelSpec, prompt: &Prompt, api_key: Option<&str>) -> reqwest::RequestBuilder {
        use crate::registry::ProviderKind;
        let builder = self.client.post(spec.endpoint.clone()).timeout(spec.request_timeout);
        match spec.provider {
            ProviderKind::GoogleStyle => {
                let b = builder.json(&json!({
                    "contents": [{ "role": "user", "parts": [{ "text": prompt.text }] }]
                }));
                match api_key {
                    Some(k) => b.header("x-goog-api-key", k),
                    None => b,
                }
            }
            _ => {
                let b = builder.json(&json!({
                    "model": spec.provider_model(),
                    "messages": [{ "role": "user", "content": prompt.text }]
                }));
                match api_key {
                    Some(k) => b.bearer_auth(k),
                    None => b,
                }
            }
        }
    }
}

fn retry_after(headers: &reqwest::header::HeaderMap) -> Option<Duration> {
    headers
        .get(reqwest::header::RETRY_AFTER)?
        .to_str()
        .ok()?
        .trim()
        .parse::<u64>()
        .ok()
        .map(Duration::from_secs)
}

pub fn parse_openai_body(body: &Value) -> Option<Completion> {
    let text = body.pointer("/choices/0/message/content")?.as_str()?.to_string();
    let usage = |k: &str| body.pointer(&format!("/usage/{k}")).and_then(Value::as_u64).unwrap_or(0);
    Some(Completion {
        text,
        input_tokens: usage("prompt_tokens"),
        output_tokens: usage("completion_tokens"),
    })
}

pub fn parse_google_body(body: &Value) -> Option<Completion> {
    let parts = body.pointer("/candidates/0/content/parts")?.as_array()?;
    let text: String = parts.iter().filter_map(|p| p.get("text").and_then(Value::as_str)).collect();
    let usage = |k: &str| body.pointer(&format!("/usageMetadata/{k}")).and_then(Value::as_u64).unwrap_or(0);
    Some(Completion {
        text,
        input_tokens: usage("promptTokenCount"),
        output_tokens: usage("candidatesTokenCount"),
    })
}

#[async_trait]
impl Provider for HttpProvider {
    async fn complete(&self, spec: &ModelSpec, prompt: &Prompt, api_key: Option<&str>) -> Result<Completion, CallError> {
        use crate::registry::ProviderKind;
        let resp = self.request(spec, prompt, api_key).send().await.map_err(|e| {
            if e.is_timeout() {
                CallError::Timeout
            } else {
                CallError::Transient {
                    status: None,
                    retry_after: None,
                    message: e.to_string(),
                }
            }
        })?;
        let status = resp.status().as_u16();
        let after = retry_after(resp.headers());
        let body = resp.text().await.map_err(|e| {
            if e.is_timeout() {
                CallError::Timeout
            } else {
                CallError::Transient {
                    status: Some(status),
                    retry_after: None,
                    message: e.to_string(),
                }
            }
        })?;
        if !(200..300).contains(&status) {
            return Err(CallError::from_status(status, after, body));
        }
        let json: Value = serde_json::from_str(&body).map_err(|e| CallError::Permanent {
            status: Some(status),
            message: format!("response is not JSON: {e}"),
        })?;
        let parsed = match spec.provider {
            ProviderKind::GoogleStyle => parse_google_body(&json),
            _ => parse_openai_body(&json),
        };
        parsed.ok_or_else(|| CallError::Permanent {
            status: Some(status),
            message: "response has no completion text".into(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn openai_body() {
        let body = json!({
            "model": "gpt-4",
            "choices": [{ "message": { "role": "assistant", "content": "[1, -2]" } }],
            "usage": { "prompt_tokens": 812, "completion_tokens": 6 }
        });
        assert_eq!(
            parse_openai_body(&body),
            Some(Completion { text: "[1, -2]".into(), input_tokens: 812, output_tokens: 6 })
        );
        assert_eq!(parse_openai_body(&json!({"choices": []})), None);
    }

    #[test]
    fn google_body() {
        let body = json!({
            "candidates": [{ "content": { "parts": [{ "text": "[-10, " }, { "text": "-10]" }] } }],
            "usageMetadata": { "promptTokenCount": 700, "candidatesTokenCount": 8 }
        });
        let c = parse_google_body(&body).unwrap();
        assert_eq!(c.text, "[-10, -10]");
        assert_eq!((c.input_tokens, c.output_tokens), (700, 8));
    }

    #[test]
    fn status_classes() {
        assert!(matches!(CallError::from_status(429, None, String::new()), CallError::Transient { .. }));
        assert!(matches!(CallError::from_status(503, None, String::new()), CallError::Transient { .. }));
        assert!(matches!(CallError::from_status(401, None, String::new()), CallError::Permanent { .. }));
    }

    #[test]
    fn mock_scores_in_range_and_seeded() {
        for i in 0..500 {
            let (e, d) = mock_scores(&format!("body {i}"), 3);
            assert!((-10..=10).contains(&e) && (-10..=10).contains(&d));
        }
        assert_eq!(mock_scores("hello", 0), mock_scores("hello", 0));
        let differs = (0..20).any(|s| mock_scores("hello", s) != mock_scores("hello", 0));
        assert!(differs);
    }
}
