//! One newspaper's daily batch for one model: walk the length-filtered pool
//! until enough articles have been scored correctly.

use chrono::NaiveDate;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Evaluation, SCHEMA_VERSION};
use crate::clock::Clock;
use crate::gateway::{build_prompt, estimate_cost, Gateway, GatewayError, RawResponse};
use crate::harvester::ArticleRecord;
use crate::registry::{ModelSpec, NewspaperSource};
use crate::score::parse_score;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchPolicy {
    /// Provider-level retries (timeouts, 429, 5xx) per query.
    pub retry_budget: u32,
    /// Extra queries of the same article after a malformed answer.
    pub malformed_retries: u32,
}

impl Default for BatchPolicy {
    fn default() -> Self {
        Self {
            retry_budget: 3,
            malformed_retries: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum BatchStatus {
    Complete,
    /// The pool ran out before `wanted` valid evaluations were collected.
    Incomplete { got: usize, wanted: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedArticle {
    pub article_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    pub evaluations: Vec<Evaluation>,
    pub status: BatchStatus,
    pub skipped: Vec<SkippedArticle>,
    /// Cost of every answered query, valid or not.
    pub cost: Decimal,
}

/// Failures that would hit every remaining article, so the batch stops.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BatchError {
    #[error(transparent)]
    Gateway(GatewayError),
}

fn is_fatal(e: &GatewayError) -> bool {
    matches!(
        e,
        GatewayError::MissingCredentials { .. } | GatewayError::QuotaExhausted { .. } | GatewayError::Ledger(_)
    )
}

/// Walks `pool` in order, scoring each article with `model` until `wanted`
/// valid evaluations exist. A provider failure or a malformed answer (after
/// `policy.malformed_retries` re-asks) skips the article.
#[allow(clippy::too_many_arguments)]
pub async fn collect_daily_batch(
    gateway: &Gateway,
    clock: &dyn Clock,
    newspaper: &NewspaperSource,
    model: &ModelSpec,
    pool: &[ArticleRecord],
    wanted: usize,
    batch_day: NaiveDate,
    policy: BatchPolicy,
) -> Result<BatchOutcome, BatchError> {
    let mut evaluations = Vec::new();
    let mut skipped = Vec::new();
    let mut cost = Decimal::ZERO;

    for article in pool {
        if evaluations.len() >= wanted {
            break;
        }
        let skip = |reason: String| SkippedArticle {
            article_id: article.id.clone(),
            reason,
        };
        let prompt = match build_prompt(&article.body_text) {
            Ok(p) => p,
            Err(e) => {
                skipped.push(skip(e.to_string()));
                continue;
            }
        };
        let mut asks = 0;
        loop {
            asks += 1;
            let resp: RawResponse = match gateway.query_model_at(model, &prompt, policy.retry_budget, clock).await {
                Ok(r) => r,
                Err(e) if is_fatal(&e) => return Err(BatchError::Gateway(e)),
                Err(e) => {
                    tracing::warn!(newspaper = %newspaper.id, model = %model.id, article = %article.id, error = %e, "article skipped");
                    skipped.push(skip(e.to_string()));
                    break;
                }
            };
            if let Ok(c) = estimate_cost(&resp, model) {
                cost += c.currency_amount;
            }
            match parse_score(&resp.text) {
                Ok(score) => {
                    evaluations.push(Evaluation {
                        schema: SCHEMA_VERSION,
                        article_id: article.id.clone(),
                        newspaper_id: newspaper.id.clone(),
                        model_id: model.id.clone(),
                        score,
                        raw_text: resp.text,
                        input_tokens: resp.input_tokens,
                        output_tokens: resp.output_tokens,
                        evaluated_at: clock.now(),
                        batch_day,
                    });
                    break;
                }
                Err(e) if asks > policy.malformed_retries => {
                    tracing::warn!(newspaper = %newspaper.id, model = %model.id, article = %article.id, error = %e, "invalid answer, article skipped");
                    skipped.push(skip(e.to_string()));
                    break;
                }
                Err(e) => {
                    tracing::info!(model = %model.id, article = %article.id, error = %e, "invalid answer, asking again");
                }
            }
        }
    }

    let got = evaluations.len();
    let status = if got >= wanted {
        BatchStatus::Complete
    } else {
        BatchStatus::Incomplete { got, wanted }
    };
    Ok(BatchOutcome {
        evaluations,
        status,
        skipped,
        cost: cost.normalize(),
    })
}
