//! HTTP API: evaluate one article by URL, collect anonymous human
//! assessments and serve run summaries.
//!
//! Evaluations made through the service go to one run per cache epoch
//! (`service-<epoch start>`), so a repeated (article, model) request within
//! an epoch is answered from the store without calling the model again.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Query, State};
use axum::http::{header, HeaderMap, HeaderName, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::CorsLayer;

use crate::clock::Clock;
use crate::gateway::{Gateway, GatewayError};
use crate::harvester::{extract_article, Fetcher, HarvestError};
use crate::registry::{parse_http_url, slugify, ModelSpec, NewspaperSource, PositioningLabel, RunParameters};
use crate::report::build_bundle;
use crate::score::CompassScore;
use crate::store::{
    collect_daily_batch, session_token_digest, BatchError, BatchPolicy, HumanAssessment, RunManifest, RunStore,
    StoreError, SCHEMA_VERSION,
};

pub const SCHEMA_HEADER: &str = "x-schema-version";
pub const SESSION_COOKIE: &str = "compass_session";

pub struct ServiceConfig {
    /// Directory holding `runs/`.
    pub root: PathBuf,
    pub params: RunParameters,
    pub models: Vec<ModelSpec>,
    pub sources: Vec<NewspaperSource>,
    /// Cache epoch; each epoch writes to its own run.
    pub epoch: Duration,
    /// The only origin allowed by CORS. `None` disables cross-origin access.
    pub ui_origin: Option<String>,
    pub policy: BatchPolicy,
}

impl ServiceConfig {
    pub fn new(root: PathBuf, params: RunParameters, models: Vec<ModelSpec>, sources: Vec<NewspaperSource>) -> Self {
        Self {
            root,
            params,
            models,
            sources,
            epoch: Duration::from_secs(24 * 3600),
            ui_origin: None,
            policy: BatchPolicy::default(),
        }
    }
}

/// One lock per (article id, model id), so identical concurrent requests
/// make a single model call.
type KeyLocks = Mutex<HashMap<(String, String), Arc<tokio::sync::Mutex<()>>>>;

pub struct Service {
    cfg: ServiceConfig,
    fetcher: Arc<dyn Fetcher>,
    gateway: Arc<Gateway>,
    clock: Arc<dyn Clock>,
    runs: Mutex<HashMap<String, Arc<RunStore>>>,
    in_flight: KeyLocks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateRequest {
    pub url: String,
    pub model_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateResponse {
    pub article_id: String,
    pub title: Option<String>,
    pub char_length: usize,
    pub score: CompassScore,
    pub model_id: String,
    pub cached: bool,
    pub run_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentView {
    pub article_id: String,
    pub score: CompassScore,
    pub submitted_at: DateTime<Utc>,
    /// True for the caller's own submission.
    pub own: bool,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn storage(e: StoreError) -> Self {
        tracing::error!(error = %e, "storage failure");
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, format!("storage error: {e}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn session_from(headers: &HeaderMap) -> Option<String> {
    headers
        .get_all(header::COOKIE)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .flat_map(|v| v.split(';'))
        .filter_map(|kv| kv.trim().split_once('='))
        .find(|(k, v)| *k == SESSION_COOKIE && !v.is_empty())
        .map(|(_, v)| v.to_string())
}

fn host_key(host: &str) -> &str {
    host.strip_prefix("www.").unwrap_or(host)
}

impl Service {
    pub fn new(cfg: ServiceConfig, fetcher: Arc<dyn Fetcher>, gateway: Arc<Gateway>, clock: Arc<dyn Clock>) -> Self {
        Self {
            cfg,
            fetcher,
            gateway,
            clock,
            runs: Mutex::new(HashMap::new()),
            in_flight: Mutex::new(HashMap::new()),
        }
    }

    /// Id of the run that holds evaluations made at `now`.
    pub fn epoch_run_id(&self, now: DateTime<Utc>) -> String {
        let len = self.cfg.epoch.as_secs().max(1) as i64;
        let ts = now.timestamp();
        let start = Utc.timestamp_opt(ts - ts.rem_euclid(len), 0).single().unwrap_or(now);
        format!("service-{}", start.format("%Y%m%dT%H%MZ"))
    }

    fn run(&self, run_id: &str) -> Result<Arc<RunStore>, StoreError> {
        let mut runs = self.runs.lock().expect("runs poisoned");
        if let Some(s) = runs.get(run_id) {
            return Ok(s.clone());
        }
        let store = Arc::new(RunStore::open(&self.cfg.root, run_id)?);
        runs.insert(run_id.to_string(), store.clone());
        Ok(store)
    }

    fn epoch_run(&self) -> Result<Arc<RunStore>, StoreError> {
        let now = self.clock.now();
        let run_id = self.epoch_run_id(now);
        match self.run(&run_id) {
            Ok(s) => Ok(s),
            Err(StoreError::UnknownRun(_)) => {
                let mut manifest = RunManifest::new(&run_id, self.cfg.params, Vec::new(), now);
                manifest.sources = self.cfg.sources.clone();
                let store = Arc::new(RunStore::create(&self.cfg.root, &manifest)?);
                self.runs.lock().expect("runs poisoned").insert(run_id, store.clone());
                Ok(store)
            }
            Err(e) => Err(e),
        }
    }

    /// The most recent run that stored `article_id`.
    fn run_with_article(&self, article_id: &str) -> Result<Option<Arc<RunStore>>, StoreError> {
        for run_id in RunStore::list_runs(&self.cfg.root)?.iter().rev() {
            let store = self.run(run_id)?;
            if store.has_article(article_id)? {
                return Ok(Some(store));
            }
        }
        Ok(None)
    }

    fn newspaper_for(&self, url: &url::Url) -> NewspaperSource {
        let host = url.host_str().unwrap_or_default();
        if let Some(s) = self
            .cfg
            .sources
            .iter()
            .find(|s| s.homepage_url.host_str().map(host_key) == Some(host_key(host)))
        {
            return s.clone();
        }
        NewspaperSource {
            id: slugify(host_key(host)),
            country: String::new(),
            name: host.to_string(),
            homepage_url: url.join("/").unwrap_or_else(|_| url.clone()),
            positioning: PositioningLabel::Unknown,
            source_note: String::new(),
        }
    }

    fn key_lock(&self, key: (String, String)) -> Arc<tokio::sync::Mutex<()>> {
        self.in_flight.lock().expect("poisoned").entry(key).or_default().clone()
    }

    pub async fn evaluate(&self, req: EvaluateRequest) -> ApiResult<EvaluateResponse> {
        let url = parse_http_url(&req.url).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("bad url: {e}")))?;
        let spec = self
            .cfg
            .models
            .iter()
            .find(|m| m.id == req.model_id)
            .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, format!("unknown model {:?}", req.model_id)))?
            .clone();
        let newspaper = self.newspaper_for(&url);
        let article = extract_article(self.fetcher.as_ref(), &url, &newspaper.id, self.clock.as_ref())
            .await
            .map_err(|e| match e {
                HarvestError::Fetch(e) => ApiError::new(StatusCode::BAD_GATEWAY, format!("could not fetch article: {e}")),
                e => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
            })?;
        let (min, max) = (self.cfg.params.min_chars, self.cfg.params.max_chars);
        if article.char_length < min {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                format!("article has {} characters, below minimum length {min}", article.char_length),
            ));
        }
        if article.char_length > max {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                format!("article has {} characters, above maximum length {max}", article.char_length),
            ));
        }

        let store = self.epoch_run().map_err(ApiError::storage)?;
        let lock = self.key_lock((article.id.clone(), spec.id.clone()));
        let _guard = lock.lock().await;
        if let Some(e) = store.find_evaluation(&article.id, &spec.id).map_err(ApiError::storage)? {
            return Ok(EvaluateResponse {
                title: article.title,
                char_length: article.char_length,
                article_id: e.article_id,
                score: e.score,
                model_id: e.model_id,
                cached: true,
                run_id: store.run_id().to_string(),
            });
        }

        let day = self.clock.now().date_naive();
        let pool = [article.clone()];
        let outcome = collect_daily_batch(&self.gateway, self.clock.as_ref(), &newspaper, &spec, &pool, 1, day, self.cfg.policy)
            .await
            .map_err(|BatchError::Gateway(e)| match e {
                GatewayError::QuotaExhausted { .. } => ApiError::new(StatusCode::TOO_MANY_REQUESTS, e.to_string()),
                e => ApiError::new(StatusCode::BAD_GATEWAY, e.to_string()),
            })?;
        let mut manifest = store.manifest().map_err(ApiError::storage)?;
        if !manifest.model_ids.contains(&spec.id) {
            manifest.model_ids.push(spec.id.clone());
            manifest.decoding.insert(spec.id.clone(), "provider defaults".into());
        }
        manifest.add_cost(&spec.id, outcome.cost);
        manifest.finished_at = Some(self.clock.now());
        store.write_manifest(&manifest).map_err(ApiError::storage)?;

        let Some(eval) = outcome.evaluations.into_iter().next() else {
            let reason = outcome.skipped.first().map(|s| s.reason.clone()).unwrap_or_default();
            return Err(ApiError::new(StatusCode::BAD_GATEWAY, format!("model gave no valid answer: {reason}")));
        };
        store.append_articles(&pool).map_err(ApiError::storage)?;
        store.append_evaluations(std::slice::from_ref(&eval)).map_err(ApiError::storage)?;
        Ok(EvaluateResponse {
            article_id: article.id,
            title: article.title,
            char_length: article.char_length,
            score: eval.score,
            model_id: spec.id,
            cached: false,
            run_id: store.run_id().to_string(),
        })
    }

    pub fn record_assessment(&self, session: &str, article_id: &str, score: CompassScore) -> ApiResult<HumanAssessment> {
        let store = self
            .run_with_article(article_id)
            .map_err(ApiError::storage)?
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown article {article_id}")))?;
        let a = HumanAssessment {
            schema: SCHEMA_VERSION,
            article_id: article_id.to_string(),
            score,
            submitted_at: self.clock.now(),
            anonymous_session_token: session_token_digest(session),
        };
        store.record_assessment(&a).map_err(|e| match e {
            StoreError::UnknownArticle(id) => ApiError::new(StatusCode::NOT_FOUND, format!("unknown article {id}")),
            e => ApiError::storage(e),
        })?;
        Ok(a)
    }

    pub fn assessments(&self, session: Option<&str>, article_id: &str) -> ApiResult<Vec<AssessmentView>> {
        let store = self
            .run_with_article(article_id)
            .map_err(ApiError::storage)?
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown article {article_id}")))?;
        let own = session.map(session_token_digest);
        Ok(store
            .load_assessments()
            .map_err(ApiError::storage)?
            .into_iter()
            .filter(|a| a.article_id == article_id)
            .map(|a| AssessmentView {
                own: own.as_deref() == Some(a.anonymous_session_token.as_str()),
                article_id: a.article_id,
                score: a.score,
                submitted_at: a.submitted_at,
            })
            .collect())
    }
}

async fn evaluate(
    State(svc): State<Arc<Service>>,
    body: Result<Json<EvaluateRequest>, JsonRejection>,
) -> ApiResult<Json<EvaluateResponse>> {
    let Json(req) = body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.body_text()))?;
    svc.evaluate(req).await.map(Json)
}

fn number_field(body: &Value, key: &str) -> ApiResult<f64> {
    body.get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, format!("{key} must be a number")))
}

async fn post_assessment(
    State(svc): State<Arc<Service>>,
    headers: HeaderMap,
    body: Result<Json<Value>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(body) = body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.body_text()))?;
    let article_id = body
        .get("article_id")
        .and_then(Value::as_str)
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "article_id must be a string"))?;
    let score = CompassScore::new(number_field(&body, "economic")?, number_field(&body, "democracy")?)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    let (session, fresh) = match session_from(&headers) {
        Some(s) => (s, false),
        None => (uuid::Uuid::new_v4().to_string(), true),
    };
    let a = svc.record_assessment(&session, article_id, score)?;
    let body = Json(AssessmentView {
        article_id: a.article_id,
        score: a.score,
        submitted_at: a.submitted_at,
        own: true,
    });
    let mut resp = (StatusCode::CREATED, body).into_response();
    if fresh {
        let cookie = format!("{SESSION_COOKIE}={session}; Path=/; HttpOnly; SameSite=Lax; Max-Age=31536000");
        if let Ok(v) = HeaderValue::from_str(&cookie) {
            resp.headers_mut().insert(header::SET_COOKIE, v);
        }
    }
    Ok(resp)
}

#[derive(Deserialize)]
struct ArticleQuery {
    article: Option<String>,
}

async fn get_assessments(
    State(svc): State<Arc<Service>>,
    headers: HeaderMap,
    Query(q): Query<ArticleQuery>,
) -> ApiResult<Json<Vec<AssessmentView>>> {
    let article = q
        .article
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "missing ?article=<id>"))?;
    svc.assessments(session_from(&headers).as_deref(), &article).map(Json)
}

#[derive(Deserialize)]
struct RunQuery {
    run: Option<String>,
}

async fn summary(State(svc): State<Arc<Service>>, Query(q): Query<RunQuery>) -> ApiResult<Response> {
    let run_id = q.run.ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "missing ?run=<id>"))?;
    let store = svc.run(&run_id).map_err(|e| match e {
        StoreError::UnknownRun(id) => ApiError::new(StatusCode::NOT_FOUND, format!("unknown run {id}")),
        e => ApiError::storage(e),
    })?;
    let bundle = build_bundle(&store).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(Json(bundle).into_response())
}

async fn models(State(svc): State<Arc<Service>>) -> Json<Value> {
    let models: Vec<Value> = svc
        .cfg
        .models
        .iter()
        .map(|m| json!({ "id": m.id, "provider": m.provider }))
        .collect();
    Json(json!({ "models": models, "min_chars": svc.cfg.params.min_chars, "max_chars": svc.cfg.params.max_chars }))
}

/// Machine-readable description of the endpoints.
pub fn api_description() -> Value {
    let score = json!({
        "type": "object",
        "required": ["economic", "democracy"],
        "properties": {
            "economic": { "type": "number", "minimum": -10, "maximum": 10 },
            "democracy": { "type": "number", "minimum": -10, "maximum": 10 }
        }
    });
    json!({
        "openapi": "3.0.3",
        "info": { "title": "compass API", "version": SCHEMA_VERSION.to_string() },
        "components": { "schemas": { "CompassScore": score } },
        "paths": {
            "/api/evaluate": { "post": {
                "summary": "Fetch an article by URL and score it with one model",
                "requestBody": { "content": { "application/json": { "schema": {
                    "type": "object", "required": ["url", "model_id"],
                    "properties": { "url": { "type": "string", "format": "uri" }, "model_id": { "type": "string" } }
                }}}},
                "responses": {
                    "200": { "description": "article_id, title, char_length, score, model_id, cached, run_id" },
                    "400": { "description": "bad URL or unknown model" },
                    "422": { "description": "article too short, too long, or no content found" },
                    "429": { "description": "model quota exhausted" },
                    "502": { "description": "provider failure or no valid answer" }
                }
            }},
            "/api/assessments": {
                "post": {
                    "summary": "Record the caller's own score for an evaluated article",
                    "requestBody": { "content": { "application/json": { "schema": {
                        "type": "object", "required": ["article_id", "economic", "democracy"],
                        "properties": {
                            "article_id": { "type": "string" },
                            "economic": { "type": "number", "minimum": -10, "maximum": 10 },
                            "democracy": { "type": "number", "minimum": -10, "maximum": 10 }
                        }
                    }}}},
                    "responses": {
                        "201": { "description": "stored; a later submission from the same session replaces it" },
                        "400": { "description": "score out of range or malformed body" },
                        "404": { "description": "unknown article" }
                    }
                },
                "get": {
                    "summary": "Assessments for one article",
                    "parameters": [{ "name": "article", "in": "query", "required": true, "schema": { "type": "string" } }],
                    "responses": { "200": { "description": "list of article_id, score, submitted_at, own" }, "404": { "description": "unknown article" } }
                }
            },
            "/api/summary": { "get": {
                "summary": "Scatter, heatmap and dispersion data of a run",
                "parameters": [{ "name": "run", "in": "query", "required": true, "schema": { "type": "string" } }],
                "responses": { "200": { "description": "report bundle" }, "404": { "description": "unknown run" } }
            }},
            "/api/models": { "get": { "summary": "Configured models and length bounds" } },
            "/api/spec": { "get": { "summary": "This document" } }
        }
    })
}

async fn spec() -> Json<Value> {
    Json(api_description())
}

async fn schema_header(resp: Response) -> Response {
    let mut resp = resp;
    resp.headers_mut()
        .insert(HeaderName::from_static(SCHEMA_HEADER), HeaderValue::from(SCHEMA_VERSION));
    resp
}

pub fn router(svc: Arc<Service>) -> Router {
    let cors = svc.cfg.ui_origin.as_deref().and_then(|o| HeaderValue::from_str(o).ok()).map(|origin| {
        CorsLayer::new()
            .allow_origin(origin)
            .allow_methods([Method::GET, Method::POST])
            .allow_headers([header::CONTENT_TYPE])
            .expose_headers([HeaderName::from_static(SCHEMA_HEADER)])
            .allow_credentials(true)
    });
    let router = Router::new()
        .route("/api/evaluate", post(evaluate))
        .route("/api/assessments", post(post_assessment).get(get_assessments))
        .route("/api/summary", get(summary))
        .route("/api/models", get(models))
        .route("/api/spec", get(spec))
        .layer(axum::middleware::map_response(schema_header))
        .with_state(svc);
    match cors {
        Some(c) => router.layer(c),
        None => router,
    }
}

pub async fn serve(svc: Arc<Service>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(svc)).await
}
