//! Model gateway: the fixed prompt, provider dispatch with retries and daily
//! quotas, token cost accounting, and deterministic mock providers.
//!
//! Every provider call (including retries) claims a slot in the
//! [`RequestLedger`] first, so a model never exceeds its daily request quota
//! no matter how many workers share the gateway.

mod ledger;
mod prompt;
mod provider;

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;

use crate::clock::{until_next_utc_day, Clock};
use crate::registry::{ModelSpec, ProviderKind};

pub use ledger::{LedgerEntry, RequestLedger};
pub use prompt::{build_prompt, Prompt, ARTICLE_MARKER, PROMPT_TEMPLATE};
pub use provider::{
    mock_scores, parse_google_body, parse_openai_body, CallError, Completion, HttpProvider, MockMode, MockProvider,
    Provider, ScriptStep, ScriptedProvider,
};

pub const LEDGER_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GatewayError {
    #[error("article body is empty")]
    EmptyArticle,
    #[error("model {model}: API key missing, set {var}")]
    MissingCredentials { model: String, var: String },
    #[error("model {model}: daily request quota exhausted")]
    QuotaExhausted { model: String },
    #[error("model {model}: provider error{}: {message}", status.map(|s| format!(" (status {s})")).unwrap_or_default())]
    Provider {
        model: String,
        status: Option<u16>,
        message: String,
    },
    #[error("model {model}: request timed out")]
    Timeout { model: String },
    #[error("response belongs to {found}, not {expected}")]
    ModelMismatch { expected: String, found: String },
    #[error("request ledger: {0}")]
    Ledger(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawResponse {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    #[serde(with = "millis")]
    pub latency: Duration,
    pub model_id: String,
    /// Retries spent before this response (0 when the first call succeeded).
    pub retries: u32,
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

/// The response the `mock-hash` model gives for `article_body` under `seed`.
pub fn deterministic_mock_response(article_body: &str, seed: u64) -> RawResponse {
    let (e, d) = mock_scores(article_body, seed);
    RawResponse {
        text: format!("[{e}, {d}]"),
        input_tokens: 0,
        output_tokens: 0,
        latency: Duration::ZERO,
        model_id: "mock-hash".into(),
        retries: 0,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub currency_amount: Decimal,
    pub model_id: String,
}

pub fn estimate_cost(resp: &RawResponse, spec: &ModelSpec) -> Result<CostEstimate, GatewayError> {
    if resp.model_id != spec.id {
        return Err(GatewayError::ModelMismatch {
            expected: spec.id.clone(),
            found: resp.model_id.clone(),
        });
    }
    let amount = Decimal::from(resp.input_tokens) * spec.input_token_cost
        + Decimal::from(resp.output_tokens) * spec.output_token_cost;
    Ok(CostEstimate {
        currency_amount: amount.normalize(),
        model_id: spec.id.clone(),
    })
}

/// Delay before retry `k` (0-based) is `base * 2^k`, capped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Backoff {
    pub base: Duration,
    pub cap: Duration,
}

impl Default for Backoff {
    fn default() -> Self {
        Self {
            base: Duration::from_secs(1),
            cap: Duration::from_secs(60),
        }
    }
}

impl Backoff {
    pub fn delay(&self, k: u32) -> Duration {
        let factor = 2u32.saturating_pow(k.min(31));
        self.base.saturating_mul(factor).min(self.cap)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuotaMode {
    /// Sleep until the next UTC day once the quota is used up.
    #[default]
    Delay,
    /// Surface [`GatewayError::QuotaExhausted`].
    Fail,
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub backoff: Backoff,
    pub quota_mode: QuotaMode,
    /// Seed for the `mock://hash` provider.
    pub mock_seed: u64,
    /// Concurrent in-flight calls per provider kind.
    pub max_in_flight: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            backoff: Backoff::default(),
            quota_mode: QuotaMode::Delay,
            mock_seed: 0,
            max_in_flight: 4,
        }
    }
}

pub struct Gateway {
    config: GatewayConfig,
    clock: Arc<dyn Clock>,
    ledger: Arc<RequestLedger>,
    http: Arc<dyn Provider>,
    mock: Arc<dyn Provider>,
    overrides: HashMap<String, Arc<dyn Provider>>,
    api_keys: HashMap<String, String>,
    limits: HashMap<&'static str, Arc<Semaphore>>,
}

fn provider_key(kind: ProviderKind) -> &'static str {
    match kind {
        ProviderKind::OpenAiStyle => "openai-style",
        ProviderKind::GoogleStyle => "google-style",
        ProviderKind::Mock => "mock",
    }
}

impl Gateway {
    pub fn new(config: GatewayConfig, clock: Arc<dyn Clock>, ledger: Arc<RequestLedger>) -> Self {
        let limits = ["openai-style", "google-style", "mock"]
            .into_iter()
            .map(|k| (k, Arc::new(Semaphore::new(config.max_in_flight.max(1)))))
            .collect();
        Self {
            mock: Arc::new(MockProvider::new(config.mock_seed)),
            http: Arc::new(HttpProvider::new(reqwest::Client::new())),
            config,
            clock,
            ledger,
            overrides: HashMap::new(),
            api_keys: HashMap::new(),
            limits,
        }
    }

    /// Routes one model id to a custom provider (scripted fakes in tests).
    pub fn with_provider(mut self, model_id: &str, provider: Arc<dyn Provider>) -> Self {
        self.overrides.insert(model_id.to_string(), provider);
        self
    }

    /// Supplies a key directly instead of reading `PROVIDER_<ID>_KEY`.
    pub fn with_api_key(mut self, model_id: &str, key: &str) -> Self {
        self.api_keys.insert(model_id.to_string(), key.to_string());
        self
    }

    pub fn ledger(&self) -> &Arc<RequestLedger> {
        &self.ledger
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    fn provider(&self, spec: &ModelSpec) -> Arc<dyn Provider> {
        if let Some(p) = self.overrides.get(&spec.id) {
            return p.clone();
        }
        match spec.provider {
            ProviderKind::Mock => self.mock.clone(),
            _ => self.http.clone(),
        }
    }

    fn api_key(&self, spec: &ModelSpec) -> Result<Option<String>, GatewayError> {
        if spec.provider == ProviderKind::Mock || self.overrides.contains_key(&spec.id) {
            return Ok(self.api_keys.get(&spec.id).cloned());
        }
        if let Some(k) = self.api_keys.get(&spec.id) {
            return Ok(Some(k.clone()));
        }
        let var = spec.api_key_var();
        match std::env::var(&var) {
            Ok(k) if !k.is_empty() => Ok(Some(k)),
            _ => Err(GatewayError::MissingCredentials {
                model: spec.id.clone(),
                var,
            }),
        }
    }

    async fn claim_quota(&self, spec: &ModelSpec, clock: &dyn Clock) -> Result<(), GatewayError> {
        loop {
            let now = clock.now();
            if self.ledger.try_reserve(&spec.id, now.date_naive(), spec.daily_request_quota) {
                return Ok(());
            }
            match self.config.quota_mode {
                QuotaMode::Fail => {
                    return Err(GatewayError::QuotaExhausted { model: spec.id.clone() });
                }
                QuotaMode::Delay => {
                    let wait = until_next_utc_day(now).max(Duration::from_secs(1));
                    tracing::info!(model = %spec.id, wait_secs = wait.as_secs(), "daily quota reached, waiting");
                    clock.sleep(wait).await;
                }
            }
        }
    }

    /// Sends `prompt` to the model, retrying timeouts, 429s and 5xx with
    /// exponential backoff up to `retry_budget` extra attempts.
    pub async fn query_model(
        &self,
        spec: &ModelSpec,
        prompt: &Prompt,
        retry_budget: u32,
    ) -> Result<RawResponse, GatewayError> {
        self.query_model_at(spec, prompt, retry_budget, self.clock.as_ref()).await
    }

    /// [`Gateway::query_model`] on a caller-supplied clock, so simulated
    /// workers each keep their own timeline.
    pub async fn query_model_at(
        &self,
        spec: &ModelSpec,
        prompt: &Prompt,
        retry_budget: u32,
        clock: &dyn Clock,
    ) -> Result<RawResponse, GatewayError> {
        let api_key = self.api_key(spec)?;
        let provider = self.provider(spec);
        let limit = self.limits[provider_key(spec.provider)].clone();
        let mut attempt = 0u32;
        loop {
            self.claim_quota(spec, clock).await?;
            let started = clock.now();
            let result = {
                let _permit = limit.acquire().await.expect("semaphore open");
                match tokio::time::timeout(spec.request_timeout, provider.complete(spec, prompt, api_key.as_deref())).await {
                    Ok(r) => r,
                    Err(_) => Err(CallError::Timeout),
                }
            };
            let latency = (clock.now() - started).to_std().unwrap_or_default();
            let (outcome, tokens) = match &result {
                Ok(c) => ("ok".to_string(), (c.input_tokens, c.output_tokens)),
                Err(e) => (e.describe(), (0, 0)),
            };
            self.ledger
                .record(LedgerEntry {
                    schema: LEDGER_SCHEMA,
                    at: started,
                    model_id: spec.id.clone(),
                    attempt,
                    outcome,
                    input_tokens: tokens.0,
                    output_tokens: tokens.1,
                    latency_ms: latency.as_millis() as u64,
                })
                .map_err(|e| GatewayError::Ledger(e.to_string()))?;

            let err = match result {
                Ok(c) => {
                    return Ok(RawResponse {
                        text: c.text,
                        input_tokens: c.input_tokens,
                        output_tokens: c.output_tokens,
                        latency,
                        model_id: spec.id.clone(),
                        retries: attempt,
                    })
                }
                Err(e) => e,
            };
            let retry_after = match &err {
                CallError::Permanent { status, message } => {
                    return Err(GatewayError::Provider {
                        model: spec.id.clone(),
                        status: *status,
                        message: message.clone(),
                    })
                }
                CallError::Transient { retry_after, .. } => *retry_after,
                CallError::Timeout => None,
            };
            if attempt >= retry_budget {
                return Err(match err {
                    CallError::Timeout => GatewayError::Timeout { model: spec.id.clone() },
                    CallError::Transient { status, message, .. } | CallError::Permanent { status, message } => {
                        GatewayError::Provider {
                            model: spec.id.clone(),
                            status,
                            message,
                        }
                    }
                });
            }
            let delay = self.config.backoff.delay(attempt).max(retry_after.unwrap_or_default());
            tracing::debug!(model = %spec.id, attempt, delay_ms = delay.as_millis() as u64, "retrying");
            clock.sleep(delay).await;
            attempt += 1;
        }
    }
}
