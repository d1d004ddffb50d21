//! Wire protocol and request handlers. Bodies are JSON with an explicit
//! `schema_version`; every successful response echoes the manifest hash of
//! the artifact snapshot that produced it, which is what lets a client (or a
//! stress test) prove that no response mixed artifacts from two sets.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use semstack_core::features::ItemFeatures;
use semstack_core::manifest::ArtifactManifest;

use crate::{AppState, ArtifactSet};

/// Version of every request and response body schema in this module.
pub const SCHEMA_VERSION: u32 = 1;

fn default_schema_version() -> u32 {
    SCHEMA_VERSION
}

fn default_k() -> usize {
    10
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchRequestBody {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub query: String,
    #[serde(default = "default_k")]
    pub k: usize,
    /// IVF probe override for this request; wins over the service default.
    #[serde(default)]
    pub nprobe: Option<usize>,
}

/// One scored item; /search scores are index dot products, /rerank scores
/// are ranker logits. Both lists come back descending, ties by ascending id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredHit {
    pub item_id: u64,
    pub score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchResponse {
    pub schema_version: u32,
    pub manifest_hash: String,
    /// Telemetry only: excluded from the determinism contract.
    pub latency_ms: f64,
    pub results: Vec<ScoredHit>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RerankUserBody {
    #[serde(default)]
    pub action_text: String,
    pub numeric: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RerankItemBody {
    pub item_id: u64,
    pub title: String,
    pub numeric: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RerankRequestBody {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub user: RerankUserBody,
    pub query: String,
    pub items: Vec<RerankItemBody>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RerankResponse {
    pub schema_version: u32,
    pub manifest_hash: String,
    /// Telemetry only: excluded from the determinism contract.
    pub latency_ms: f64,
    pub results: Vec<ScoredHit>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HealthResponse {
    pub schema_version: u32,
    /// "ready" once an artifact set is installed, "loading" before.
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest_hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<ArtifactManifest>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReloadResponse {
    pub schema_version: u32,
    pub manifest_hash: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub schema_version: u32,
    pub error: ErrorDetail,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorDetail {
    /// Machine-readable: "bad_request", "not_ready", or "internal".
    pub code: String,
    pub message: String,
}

enum ApiError {
    NotReady,
    BadRequest(String),
    Internal(String),
}

impl ApiError {
    /// Core errors surfacing on the request path are the caller's fault
    /// (bad dims, out-of-range k, unknown buckets); anything else is ours.
    fn from_core(err: semstack_core::Error) -> ApiError {
        use semstack_core::Error as E;
        match err {
            E::Config(_) | E::Shape(_) | E::OutOfRange(_) | E::Data(_) => {
                ApiError::BadRequest(err.to_string())
            }
            other => ApiError::Internal(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code, message) = match self {
            ApiError::NotReady => {
                (StatusCode::SERVICE_UNAVAILABLE, "not_ready", "artifacts not loaded yet".into())
            }
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, "bad_request", m),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, "internal", m),
        };
        let body = ErrorBody {
            schema_version: SCHEMA_VERSION,
            error: ErrorDetail { code: code.into(), message },
        };
        (status, Json(body)).into_response()
    }
}

/// Histogram bucket upper bounds in milliseconds; one overflow bucket on top.
const LATENCY_BOUNDS_MS: [f64; 11] =
    [0.25, 0.5, 1.0, 2.5, 5.0, 10.0, 25.0, 50.0, 100.0, 250.0, 1000.0];

#[derive(Default)]
pub(crate) struct LatencyHistogram {
    buckets: [AtomicU64; LATENCY_BOUNDS_MS.len() + 1],
    count: AtomicU64,
    sum_micros: AtomicU64,
}

impl LatencyHistogram {
    fn observe(&self, ms: f64) {
        let idx = LATENCY_BOUNDS_MS
            .iter()
            .position(|&b| ms <= b)
            .unwrap_or(LATENCY_BOUNDS_MS.len());
        self.buckets[idx].fetch_add(1, Ordering::Relaxed);
        self.count.fetch_add(1, Ordering::Relaxed);
        self.sum_micros.fetch_add((ms * 1000.0).round() as u64, Ordering::Relaxed);
    }

    fn snapshot(&self) -> HistogramReport {
        let mut cumulative = 0;
        let mut buckets = Vec::with_capacity(LATENCY_BOUNDS_MS.len() + 1);
        for (i, bucket) in self.buckets.iter().enumerate() {
            cumulative += bucket.load(Ordering::Relaxed);
            let le = LATENCY_BOUNDS_MS
                .get(i)
                .map(|b| b.to_string())
                .unwrap_or_else(|| "+Inf".to_string());
            buckets.push(HistogramBucket { le, count: cumulative });
        }
        HistogramReport {
            count: self.count.load(Ordering::Relaxed),
            sum_ms: self.sum_micros.load(Ordering::Relaxed) as f64 / 1000.0,
            buckets,
        }
    }
}

#[derive(Default)]
pub(crate) struct EndpointCounters {
    requests: AtomicU64,
    errors: AtomicU64,
    latency: LatencyHistogram,
}

impl EndpointCounters {
    fn report(&self) -> EndpointReport {
        EndpointReport {
            requests: self.requests.load(Ordering::Relaxed),
            errors: self.errors.load(Ordering::Relaxed),
            latency_ms: self.latency.snapshot(),
        }
    }
}

#[derive(Default)]
pub(crate) struct ServiceMetrics {
    search: EndpointCounters,
    rerank: EndpointCounters,
    reload_success: AtomicU64,
    reload_failure: AtomicU64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistogramBucket {
    /// Upper bound in ms as a string ("+Inf" for the overflow bucket);
    /// counts are cumulative, so the last bucket equals `count`.
    pub le: String,
    pub count: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistogramReport {
    pub count: u64,
    pub sum_ms: f64,
    pub buckets: Vec<HistogramBucket>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EndpointReport {
    pub requests: u64,
    pub errors: u64,
    pub latency_ms: HistogramReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReloadReport {
    pub success: u64,
    pub failure: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsResponse {
    pub schema_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest_hash: Option<String>,
    pub search: EndpointReport,
    pub rerank: EndpointReport,
    pub reloads: ReloadReport,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/search", post(search))
        .route("/rerank", post(rerank))
        .route("/healthz", get(healthz))
        .route("/metrics", get(metrics))
        .route("/admin/reload", post(reload))
        .with_state(state)
}

fn accept<T>(body: Result<Json<T>, JsonRejection>, schema_version: impl Fn(&T) -> u32) -> Result<T, ApiError> {
    let Json(req) = body.map_err(|e| ApiError::BadRequest(e.to_string()))?;
    let v = schema_version(&req);
    if v != SCHEMA_VERSION {
        return Err(ApiError::BadRequest(format!(
            "unsupported schema_version {v}, this service speaks {SCHEMA_VERSION}"
        )));
    }
    Ok(req)
}

async fn search(
    State(state): State<AppState>,
    body: Result<Json<SearchRequestBody>, JsonRejection>,
) -> Response {
    let started = Instant::now();
    let m = state.metrics();
    m.search.requests.fetch_add(1, Ordering::Relaxed);
    let out = handle_search(&state, body);
    let ms = started.elapsed().as_secs_f64() * 1e3;
    m.search.latency.observe(ms);
    match out {
        Ok(mut resp) => {
            resp.latency_ms = ms;
            Json(resp).into_response()
        }
        Err(err) => {
            m.search.errors.fetch_add(1, Ordering::Relaxed);
            err.into_response()
        }
    }
}

fn handle_search(
    state: &AppState,
    body: Result<Json<SearchRequestBody>, JsonRejection>,
) -> Result<SearchResponse, ApiError> {
    let req = accept(body, |r| r.schema_version)?;
    let max_k = state.config().max_k;
    if req.k == 0 || req.k > max_k {
        return Err(ApiError::BadRequest(format!("k must be in 1..={max_k}, got {}", req.k)));
    }
    let set = state.snapshot().ok_or(ApiError::NotReady)?;
    let query = set.featurizer.query(&req.query).map_err(ApiError::from_core)?;
    let embedding = set.retrieval.query_embed(&query).map_err(ApiError::from_core)?;
    let nprobe = req.nprobe.or(state.config().nprobe_default);
    let found = set.index.search(&embedding, req.k, nprobe).map_err(ApiError::from_core)?;
    Ok(SearchResponse {
        schema_version: SCHEMA_VERSION,
        manifest_hash: set.manifest_hash.clone(),
        latency_ms: 0.0,
        results: found
            .into_iter()
            .map(|r| ScoredHit { item_id: r.item_id, score: r.score })
            .collect(),
    })
}

async fn rerank(
    State(state): State<AppState>,
    body: Result<Json<RerankRequestBody>, JsonRejection>,
) -> Response {
    let started = Instant::now();
    let m = state.metrics();
    m.rerank.requests.fetch_add(1, Ordering::Relaxed);
    let out = handle_rerank(&state, body);
    let ms = started.elapsed().as_secs_f64() * 1e3;
    m.rerank.latency.observe(ms);
    match out {
        Ok(mut resp) => {
            resp.latency_ms = ms;
            Json(resp).into_response()
        }
        Err(err) => {
            m.rerank.errors.fetch_add(1, Ordering::Relaxed);
            err.into_response()
        }
    }
}

fn handle_rerank(
    state: &AppState,
    body: Result<Json<RerankRequestBody>, JsonRejection>,
) -> Result<RerankResponse, ApiError> {
    let req = accept(body, |r| r.schema_version)?;
    let depth = state.config().rerank_depth;
    if req.items.len() > depth {
        return Err(ApiError::BadRequest(format!(
            "rerank accepts at most {depth} items, got {}",
            req.items.len()
        )));
    }
    let set = state.snapshot().ok_or(ApiError::NotReady)?;
    let fz = &set.featurizer;
    let user = fz.user(&req.user.action_text, &req.user.numeric).map_err(ApiError::from_core)?;
    let query = fz.query(&req.query).map_err(ApiError::from_core)?;
    let items: Vec<ItemFeatures> = req
        .items
        .iter()
        .map(|it| fz.item(it.item_id, &it.title, &it.numeric))
        .collect::<semstack_core::Result<_>>()
        .map_err(ApiError::from_core)?;
    let ranked = set.ranker.rerank(&user, &query, &items).map_err(ApiError::from_core)?;
    Ok(RerankResponse {
        schema_version: SCHEMA_VERSION,
        manifest_hash: set.manifest_hash.clone(),
        latency_ms: 0.0,
        results: ranked
            .into_iter()
            .map(|r| ScoredHit { item_id: r.item_id, score: r.logit })
            .collect(),
    })
}

async fn healthz(State(state): State<AppState>) -> Response {
    match state.snapshot() {
        Some(set) => Json(HealthResponse {
            schema_version: SCHEMA_VERSION,
            status: "ready".into(),
            manifest_hash: Some(set.manifest_hash.clone()),
            manifest: Some(set.manifest.clone()),
        })
        .into_response(),
        None => (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(HealthResponse {
                schema_version: SCHEMA_VERSION,
                status: "loading".into(),
                manifest_hash: None,
                manifest: None,
            }),
        )
            .into_response(),
    }
}

async fn metrics(State(state): State<AppState>) -> Json<MetricsResponse> {
    let m = state.metrics();
    Json(MetricsResponse {
        schema_version: SCHEMA_VERSION,
        manifest_hash: state.snapshot().map(|s| s.manifest_hash.clone()),
        search: m.search.report(),
        rerank: m.rerank.report(),
        reloads: ReloadReport {
            success: m.reload_success.load(Ordering::Relaxed),
            failure: m.reload_failure.load(Ordering::Relaxed),
        },
    })
}

/// Re-read the artifact dir and swap it in. Validation happens entirely
/// before the swap: a rejected set leaves the old one serving.
async fn reload(State(state): State<AppState>) -> Response {
    let dir = state.config().artifacts_dir.clone();
    let loaded = tokio::task::spawn_blocking(move || ArtifactSet::load(&dir)).await;
    let m = state.metrics();
    match loaded {
        Ok(Ok(set)) => {
            let manifest_hash = set.manifest_hash.clone();
            state.install(set);
            m.reload_success.fetch_add(1, Ordering::Relaxed);
            Json(ReloadResponse { schema_version: SCHEMA_VERSION, manifest_hash }).into_response()
        }
        Ok(Err(err)) => {
            m.reload_failure.fetch_add(1, Ordering::Relaxed);
            ApiError::Internal(format!("reload rejected: {err}")).into_response()
        }
        Err(join) => {
            m.reload_failure.fetch_add(1, Ordering::Relaxed);
            ApiError::Internal(format!("reload task failed: {join}")).into_response()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::ServeConfig;

    use axum::body::Body;
    use axum::http::Request;
    use serde_json::{json, Value};
    use tower::ServiceExt;

    async fn call(app: Router, method: &str, path: &str, body: Option<Value>) -> (StatusCode, Value) {
        let builder = Request::builder().method(method).uri(path);
        let request = match body {
            Some(v) => builder
                .header("content-type", "application/json")
                .body(Body::from(v.to_string()))
                .unwrap(),
            None => builder.body(Body::empty()).unwrap(),
        };
        let response = app.oneshot(request).await.unwrap();
        let status = response.status();
        let bytes = axum::body::to_bytes(response.into_body(), usize::MAX).await.unwrap();
        let value = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap()
        };
        (status, value)
    }

    fn ready_app(dir: &std::path::Path) -> (AppState, Router) {
        let state = AppState::load(ServeConfig::new(dir)).unwrap();
        let app = router(state.clone());
        (state, app)
    }

    fn search_body(query: &str, k: usize) -> Value {
        json!({ "query": query, "k": k })
    }

    #[tokio::test]
    async fn healthz_reports_not_ready_then_ready() {
        let dir = tempfile::tempdir().unwrap();
        let empty = AppState::empty(ServeConfig::new(dir.path()));
        let (status, body) = call(router(empty), "GET", "/healthz", None).await;
        assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
        assert_eq!(body["status"], "loading");

        let hash = fixtures::install_version(dir.path(), 1);
        let (_, app) = ready_app(dir.path());
        let (status, body) = call(app, "GET", "/healthz", None).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(body["status"], "ready");
        assert_eq!(body["manifest_hash"], hash.as_str());
        assert!(body["manifest"]["files"].is_object());
    }

    #[tokio::test]
    async fn search_returns_descending_hits_with_manifest_hash() {
        let dir = tempfile::tempdir().unwrap();
        let hash = fixtures::install_version(dir.path(), 1);
        let (_, app) = ready_app(dir.path());
        let (status, body) =
            call(app, "POST", "/search", Some(search_body("winter gloves", 5))).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(body["manifest_hash"], hash.as_str());
        let results = body["results"].as_array().unwrap();
        assert_eq!(results.len(), 5);
        let scores: Vec<f64> = results.iter().map(|r| r["score"].as_f64().unwrap()).collect();
        assert!(scores.windows(2).all(|w| w[0] >= w[1]), "scores not descending: {scores:?}");
    }

    /// The service adds no reordering: its results equal composing the
    /// featurizer, query tower, and index directly.
    #[tokio::test]
    async fn search_matches_direct_composition() {
        let dir = tempfile::tempdir().unwrap();
        fixtures::install_version(dir.path(), 1);
        let set = ArtifactSet::load(dir.path()).unwrap();
        let q = set.featurizer.query("camping stove").unwrap();
        let emb = set.retrieval.query_embed(&q).unwrap();
        let expected = set.index.search(&emb, 4, None).unwrap();

        let (_, app) = ready_app(dir.path());
        let (status, body) =
            call(app, "POST", "/search", Some(search_body("camping stove", 4))).await;
        assert_eq!(status, StatusCode::OK);
        let results = body["results"].as_array().unwrap();
        assert_eq!(results.len(), expected.len());
        for (got, want) in results.iter().zip(&expected) {
            assert_eq!(got["item_id"].as_u64().unwrap(), want.item_id);
            assert_eq!(got["score"].as_f64().unwrap(), want.score, "score drifted in transit");
        }
    }

    #[tokio::test]
    async fn identical_searches_differ_only_in_latency() {
        let dir = tempfile::tempdir().unwrap();
        fixtures::install_version(dir.path(), 1);
        let (_, app) = ready_app(dir.path());
        let (_, mut a) =
            call(app.clone(), "POST", "/search", Some(search_body("trail socks", 3))).await;
        let (_, mut b) = call(app, "POST", "/search", Some(search_body("trail socks", 3))).await;
        assert!(a["latency_ms"].is_number());
        a.as_object_mut().unwrap().remove("latency_ms");
        b.as_object_mut().unwrap().remove("latency_ms");
        assert_eq!(a, b);
    }

    #[tokio::test]
    async fn search_validates_k_and_schema_version() {
        let dir = tempfile::tempdir().unwrap();
        fixtures::install_version(dir.path(), 1);
        let (_, app) = ready_app(dir.path());

        let (status, body) = call(app.clone(), "POST", "/search", Some(search_body("x", 0))).await;
        assert_eq!(status, StatusCode::BAD_REQUEST);
        assert_eq!(body["error"]["code"], "bad_request");

        let (status, _) = call(app.clone(), "POST", "/search", Some(search_body("x", 1001))).await;
        assert_eq!(status, StatusCode::BAD_REQUEST);

        let (status, body) = call(
            app,
            "POST",
            "/search",
            Some(json!({ "schema_version": 99, "query": "x", "k": 1 })),
        )
        .await;
        assert_eq!(status, StatusCode::BAD_REQUEST);
        assert!(body["error"]["message"].as_str().unwrap().contains("schema_version"));
    }

    #[tokio::test]
    async fn malformed_bodies_are_client_errors() {
        let dir = tempfile::tempdir().unwrap();
        fixtures::install_version(dir.path(), 1);
        let (_, app) = ready_app(dir.path());

        let request = Request::builder()
            .method("POST")
            .uri("/search")
            .header("content-type", "application/json")
            .body(Body::from("{not json"))
            .unwrap();
        let response = app.clone().oneshot(request).await.unwrap();
        assert_eq!(response.status(), StatusCode::BAD_REQUEST);
        let bytes = axum::body::to_bytes(response.into_body(), usize::MAX).await.unwrap();
        let body: Value = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(body["error"]["code"], "bad_request");

        // Unknown fields are rejected rather than silently dropped.
        let (status, _) = call(
            app,
            "POST",
            "/search",
            Some(json!({ "query": "x", "k": 1, "tyop": true })),
        )
        .await;
        assert_eq!(status, StatusCode::BAD_REQUEST);
    }

    fn rerank_body(items: Value) -> Value {
        json!({
            "user": { "action_text": "clicked gloves", "numeric": [1.2, 0.3] },
            "query": "winter gloves",
            "items": items,
        })
    }

    #[tokio::test]
    async fn rerank_orders_by_score_with_id_ties() {
        let dir = tempfile::tempdir().unwrap();
        fixtures::install_version(dir.path(), 1);
        let (_, app) = ready_app(dir.path());
        // Two byte-identical items under different ids force an exact tie.
        let items = json!([
            { "item_id": 9, "title": "wool winter gloves", "numeric": [0.1, 2.0, 0.4, 0.02] },
            { "item_id": 4, "title": "wool winter gloves", "numeric": [0.1, 2.0, 0.4, 0.02] },
            { "item_id": 7, "title": "beach towel", "numeric": [-0.5, 6.0, 0.1, 0.08] },
        ]);
        let (status, body) = call(app, "POST", "/rerank", Some(rerank_body(items))).await;
        assert_eq!(status, StatusCode::OK);
        let results = body["results"].as_array().unwrap();
        let ids: Vec<u64> = results.iter().map(|r| r["item_id"].as_u64().unwrap()).collect();
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![4, 7, 9], "result must be a permutation of the request");
        let scores: Vec<f64> = results.iter().map(|r| r["score"].as_f64().unwrap()).collect();
        assert!(scores.windows(2).all(|w| w[0] >= w[1]));
        let p4 = ids.iter().position(|&i| i == 4).unwrap();
        let p9 = ids.iter().position(|&i| i == 9).unwrap();
        assert_eq!(scores[p4], scores[p9]);
        assert_eq!(p9, p4 + 1, "equal scores must order by ascending item id");
    }

    #[tokio::test]
    async fn rerank_validates_inputs() {
        let dir = tempfile::tempdir().unwrap();
        fixtures::install_version(dir.path(), 1);
        let (_, app) = ready_app(dir.path());

        // Wrong numeric dimensionality for an item.
        let items = json!([{ "item_id": 1, "title": "gloves", "numeric": [0.1] }]);
        let (status, body) = call(app.clone(), "POST", "/rerank", Some(rerank_body(items))).await;
        assert_eq!(status, StatusCode::BAD_REQUEST);
        assert_eq!(body["error"]["code"], "bad_request");

        // Depth cap.
        let too_many: Vec<Value> = (0..101)
            .map(|i| json!({ "item_id": i, "title": "x", "numeric": [0.0, 1.0, 0.0, 0.0] }))
            .collect();
        let (status, _) =
            call(app.clone(), "POST", "/rerank", Some(rerank_body(json!(too_many)))).await;
        assert_eq!(status, StatusCode::BAD_REQUEST);

        // Empty list is a valid request with an empty result.
        let (status, body) = call(app, "POST", "/rerank", Some(rerank_body(json!([])))).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(body["results"].as_array().unwrap().len(), 0);
    }

    #[tokio::test]
    async fn reload_swaps_the_hash_exactly_once_under_sequential_load() {
        let dir = tempfile::tempdir().unwrap();
        let h1 = fixtures::install_version(dir.path(), 1);
        let (_, app) = ready_app(dir.path());

        let mut hashes = Vec::new();
        for _ in 0..5 {
            let (_, body) =
                call(app.clone(), "POST", "/search", Some(search_body("tent", 2))).await;
            hashes.push(body["manifest_hash"].as_str().unwrap().to_string());
        }
        let h2 = fixtures::install_version(dir.path(), 2);
        let (status, body) = call(app.clone(), "POST", "/admin/reload", None).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(body["manifest_hash"], h2.as_str());
        for _ in 0..5 {
            let (_, body) =
                call(app.clone(), "POST", "/search", Some(search_body("tent", 2))).await;
            hashes.push(body["manifest_hash"].as_str().unwrap().to_string());
        }

        let transitions =
            hashes.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(transitions, 1, "hash sequence: {hashes:?}");
        assert_eq!(hashes.first().unwrap(), &h1);
        assert_eq!(hashes.last().unwrap(), &h2);
    }

    #[tokio::test]
    async fn failed_reload_keeps_the_old_set_serving() {
        let dir = tempfile::tempdir().unwrap();
        let h1 = fixtures::install_version(dir.path(), 1);
        let (_, app) = ready_app(dir.path());

        // Corrupt one artifact on disk; the running set must be unaffected.
        let ckpt = dir.path().join(semstack_core::manifest::DSR_CKPT_FILE);
        let mut bytes = std::fs::read(&ckpt).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x01;
        std::fs::write(&ckpt, bytes).unwrap();

        let (status, body) = call(app.clone(), "POST", "/admin/reload", None).await;
        assert_eq!(status, StatusCode::INTERNAL_SERVER_ERROR);
        assert!(body["error"]["message"].as_str().unwrap().contains("reload rejected"));

        let (status, body) =
            call(app.clone(), "POST", "/search", Some(search_body("tent", 1))).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(body["manifest_hash"], h1.as_str());

        let (_, m) = call(app.clone(), "GET", "/metrics", None).await;
        assert_eq!(m["reloads"]["failure"], 1);
        assert_eq!(m["reloads"]["success"], 0);

        // A repaired dir swaps in cleanly afterwards.
        let h2 = fixtures::install_version(dir.path(), 2);
        let (status, body) = call(app.clone(), "POST", "/admin/reload", None).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(body["manifest_hash"], h2.as_str());
    }

    #[tokio::test]
    async fn metrics_count_requests_errors_and_latency() {
        let dir = tempfile::tempdir().unwrap();
        fixtures::install_version(dir.path(), 1);
        let (_, app) = ready_app(dir.path());

        for _ in 0..3 {
            call(app.clone(), "POST", "/search", Some(search_body("boots", 1))).await;
        }
        call(app.clone(), "POST", "/search", Some(search_body("boots", 0))).await;

        let (status, m) = call(app, "GET", "/metrics", None).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(m["search"]["requests"], 4);
        assert_eq!(m["search"]["errors"], 1);
        assert_eq!(m["search"]["latency_ms"]["count"], 4);
        let buckets = m["search"]["latency_ms"]["buckets"].as_array().unwrap();
        assert_eq!(buckets.last().unwrap()["le"], "+Inf");
        assert_eq!(buckets.last().unwrap()["count"], 4, "cumulative overflow bucket");
        assert_eq!(m["rerank"]["requests"], 0);
    }

    /// Scaled-down hot-swap stress: concurrent searches across repeated
    /// swaps must each be internally consistent — the echoed hash identifies
    /// a version, and the body must match that version's expected output.
    #[tokio::test(flavor = "multi_thread", worker_threads = 4)]
    async fn concurrent_swaps_never_mix_artifact_sets() {
        let dir = tempfile::tempdir().unwrap();

        // Precompute each version's expected results for a fixed request.
        let mut expected = std::collections::BTreeMap::new();
        let mut hashes = Vec::new();
        for seed in [1u64, 2] {
            let hash = fixtures::install_version(dir.path(), seed);
            let set = ArtifactSet::load(dir.path()).unwrap();
            let q = set.featurizer.query("rain jacket").unwrap();
            let emb = set.retrieval.query_embed(&q).unwrap();
            let results = set.index.search(&emb, 3, None).unwrap();
            expected.insert(hash.clone(), results);
            hashes.push(hash);
        }

        // Start serving version 1, then swap back and forth under load.
        fixtures::install_version(dir.path(), 1);
        let (_, app) = ready_app(dir.path());

        let mut workers = Vec::new();
        for _ in 0..4 {
            let app = app.clone();
            let expected = expected.clone();
            workers.push(tokio::spawn(async move {
                for _ in 0..50 {
                    let (status, body) = call(
                        app.clone(),
                        "POST",
                        "/search",
                        Some(search_body("rain jacket", 3)),
                    )
                    .await;
                    assert_eq!(status, StatusCode::OK);
                    let hash = body["manifest_hash"].as_str().unwrap();
                    let want = expected
                        .get(hash)
                        .unwrap_or_else(|| panic!("unknown manifest hash {hash}"));
                    let results = body["results"].as_array().unwrap();
                    assert_eq!(results.len(), want.len());
                    for (got, want) in results.iter().zip(want) {
                        assert_eq!(got["item_id"].as_u64().unwrap(), want.item_id);
                        assert_eq!(got["score"].as_f64().unwrap(), want.score);
                    }
                }
            }));
        }

        for seed in [2u64, 1, 2] {
            fixtures::install_version(dir.path(), seed);
            let (status, _) = call(app.clone(), "POST", "/admin/reload", None).await;
            assert_eq!(status, StatusCode::OK);
        }
        for w in workers {
            w.await.unwrap();
        }
    }
}
