//! HTTP service: object upload, sessions with bindings and query history,
//! what-if edits and spectral analysis. Bodies are JSON.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Mutex;

use attrql_core::algebra::AlgebraExpr;
use attrql_core::analysis::{deep_representation, spectral_signature, Edit, SpectralOptions};
use attrql_core::attribution::{BackendConfig, WindowSpec};
use attrql_core::nn::{self, Dataset, HeadHyper, ModelSpec, NnError, Tensor};
use attrql_core::qlang::{Binding, Bindings};

use crate::artifact::{registry_from_store, run_query, ResultFile};
use crate::store::{Kind, Store, StoreError};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub query_text: String,
    /// Normalized expression.
    pub expr: AlgebraExpr,
    pub result_ref: String,
    pub bindings: Bindings,
    pub config: BackendConfig,
    pub wall_time_ms: u64,
    /// Unix time in milliseconds.
    pub timestamp: u64,
}

#[derive(Default)]
struct Session {
    bindings: Bindings,
    history: Vec<HistoryEntry>,
}

pub struct AppState {
    store: Store,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    next_session: AtomicU64,
}

type Shared = Arc<AppState>;

#[derive(Debug)]
pub enum ApiError {
    BadRequest(Value),
    NotFound(String),
    Internal(String),
}

impl ApiError {
    fn bad(kind: &str, message: impl Into<String>) -> Self {
        ApiError::BadRequest(json!({"kind": kind, "message": message.into(), "errors": []}))
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound { .. } | StoreError::BadRef(_) => ApiError::NotFound(e.to_string()),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        match self {
            ApiError::BadRequest(body) => (StatusCode::BAD_REQUEST, Json(body)).into_response(),
            ApiError::NotFound(message) => {
                (StatusCode::NOT_FOUND, Json(json!({"kind": "not-found", "message": message}))).into_response()
            }
            ApiError::Internal(message) => {
                (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({"kind": "internal", "message": message})))
                    .into_response()
            }
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad("malformed", e.to_string()))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

pub fn router(store: Store) -> Router {
    let state = Arc::new(AppState {
        store,
        sessions: RwLock::new(HashMap::new()),
        next_session: AtomicU64::new(1),
    });
    Router::new()
        .route("/models", post(post_model))
        .route("/models/{reference}", get(get_model))
        .route("/models/{reference}/truncate", post(truncate_model))
        .route("/inputs", post(post_input))
        .route("/inputs/{reference}", get(get_input))
        .route("/datasets", post(post_dataset))
        .route("/datasets/{reference}", get(get_dataset))
        .route("/results/{reference}", get(get_result))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/bind", post(bind))
        .route("/sessions/{id}/query", post(query))
        .route("/sessions/{id}/whatif", post(whatif))
        .route("/sessions/{id}/history", get(history))
        .route("/sessions/{id}/replay", post(replay))
        .route("/analysis/spectral", post(spectral))
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(addr: &str, store: Store) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(store)).await
}

fn raw_json(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], bytes).into_response()
}

async fn post_model(State(s): State<Shared>, body: Bytes) -> ApiResult<Json<Value>> {
    let model: ModelSpec = parse(&body)?;
    let reference = s.store.put(Kind::Model, &model)?;
    Ok(Json(json!({"ref": reference, "stages": model.stage_count()})))
}

async fn get_model(State(s): State<Shared>, Path(reference): Path<String>) -> ApiResult<Response> {
    Ok(raw_json(s.store.get_bytes(Kind::Model, &reference)?))
}

async fn post_input(State(s): State<Shared>, body: Bytes) -> ApiResult<Json<Value>> {
    let input: Tensor = parse(&body)?;
    Ok(Json(json!({"ref": s.store.put(Kind::Input, &input)?})))
}

async fn get_input(State(s): State<Shared>, Path(reference): Path<String>) -> ApiResult<Response> {
    Ok(raw_json(s.store.get_bytes(Kind::Input, &reference)?))
}

async fn post_dataset(State(s): State<Shared>, body: Bytes) -> ApiResult<Json<Value>> {
    let data: Dataset = parse(&body)?;
    Ok(Json(json!({"ref": s.store.put(Kind::Dataset, &data)?, "len": data.len()})))
}

async fn get_dataset(State(s): State<Shared>, Path(reference): Path<String>) -> ApiResult<Response> {
    Ok(raw_json(s.store.get_bytes(Kind::Dataset, &reference)?))
}

async fn get_result(State(s): State<Shared>, Path(reference): Path<String>) -> ApiResult<Response> {
    Ok(raw_json(s.store.get_bytes(Kind::Result, &reference)?))
}

#[derive(Deserialize)]
struct TruncateRequest {
    #[serde(alias = "stage")]
    l: usize,
    dataset: String,
    #[serde(default)]
    hyper: HeadHyper,
}

fn nn_error(e: NnError) -> ApiError {
    let kind = match e {
        NnError::StageOutOfRange { .. } | NnError::TruncateAtLastStage { .. } => "layer-range",
        _ => "invalid",
    };
    ApiError::bad(kind, e.to_string())
}

async fn truncate_model(
    State(s): State<Shared>,
    Path(reference): Path<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let req: TruncateRequest = parse(&body)?;
    let model: ModelSpec = s.store.get(Kind::Model, &reference)?;
    let data: Dataset = s.store.get(Kind::Dataset, &req.dataset)?;
    let (stage, hyper) = (req.l, req.hyper);
    let (truncated, accuracy) = blocking(move || {
        let t = nn::truncate(&model, stage, &data, &hyper)?;
        let acc = nn::accuracy(&t, &data)?;
        Ok::<_, NnError>((t, acc))
    })
    .await?
    .map_err(nn_error)?;
    let truncated_ref = s.store.put(Kind::Model, &truncated)?;
    s.store.set_truncation(&reference, stage, &truncated_ref)?;
    Ok(Json(json!({"ref": truncated_ref, "stage": stage, "accuracy": accuracy})))
}

async fn create_session(State(s): State<Shared>) -> Json<Value> {
    let id = format!("s{}", s.next_session.fetch_add(1, Ordering::Relaxed));
    s.sessions
        .write()
        .expect("session table poisoned")
        .insert(id.clone(), Arc::new(Mutex::new(Session::default())));
    Json(json!({"id": id}))
}

fn session(s: &AppState, id: &str) -> ApiResult<Arc<Mutex<Session>>> {
    s.sessions
        .read()
        .expect("session table poisoned")
        .get(id)
        .cloned()
        .ok_or_else(|| ApiError::NotFound(format!("no session '{id}'")))
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum BindRequest {
    Model {
        name: String,
        #[serde(rename = "ref")]
        reference: String,
    },
    Input {
        name: String,
        #[serde(rename = "ref")]
        reference: String,
    },
    Window {
        name: String,
        window: WindowSpec,
    },
}

async fn bind(State(s): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let req: BindRequest = parse(&body)?;
    let session = session(&s, &id)?;
    let (name, binding) = match req {
        BindRequest::Model { name, reference } => {
            s.store.get::<ModelSpec>(Kind::Model, &reference)?;
            (name, Binding::Model { reference })
        }
        BindRequest::Input { name, reference } => {
            let input: Tensor = s.store.get(Kind::Input, &reference)?;
            (
                name,
                Binding::Input {
                    reference,
                    shape: input.shape().to_vec(),
                },
            )
        }
        BindRequest::Window { name, window } => (name, Binding::Window { window }),
    };
    if !attrql_core::qlang::is_identifier(&name) {
        return Err(ApiError::bad("invalid-name", format!("'{name}' is not an identifier")));
    }
    let mut guard = session.lock().await;
    guard
        .bindings
        .bind(name, binding)
        .map_err(|e| ApiError::bad("kind-mismatch", e.to_string()))?;
    Ok(Json(json!({"bindings": guard.bindings})))
}

#[derive(Deserialize)]
struct QueryRequest {
    q: String,
    #[serde(default)]
    config: BackendConfig,
}

/// Evaluates `text` and stores the result, returning its ref.
async fn evaluate_and_store(
    s: &Shared,
    text: String,
    bindings: Bindings,
    cfg: BackendConfig,
) -> ApiResult<(String, ResultFile)> {
    let registry = registry_from_store(&s.store, &bindings)?;
    let result = blocking(move || run_query(&text, &bindings, &registry, &cfg, None))
        .await?
        .map_err(|e| ApiError::BadRequest(e.payload()))?;
    let reference = s.store.put(Kind::Result, &result)?;
    Ok((reference, result))
}

async fn query(State(s): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let req: QueryRequest = parse(&body)?;
    let session = session(&s, &id)?;
    let mut guard = session.lock().await;
    let started = Instant::now();
    let (result_ref, result) = evaluate_and_store(&s, req.q.clone(), guard.bindings.clone(), req.config.clone()).await?;
    let bindings = guard.bindings.clone();
    guard.history.push(HistoryEntry {
        query_text: req.q,
        expr: result.meta.expr.clone(),
        result_ref: result_ref.clone(),
        bindings,
        config: req.config,
        wall_time_ms: started.elapsed().as_millis() as u64,
        timestamp: now_ms(),
    });
    Ok(Json(json!({"result_ref": result_ref, "result": result})))
}

#[derive(Deserialize)]
struct WhatIfRequest {
    input_ref: String,
    edit: Edit,
    /// Baseline for nullification; all-zero when absent.
    #[serde(default)]
    baseline_ref: Option<String>,
}

async fn whatif(State(s): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let req: WhatIfRequest = parse(&body)?;
    session(&s, &id)?;
    let x: Tensor = s.store.get(Kind::Input, &req.input_ref)?;
    let xbar = match &req.baseline_ref {
        Some(r) => s.store.get(Kind::Input, r)?,
        None => Tensor::zeros(x.shape()),
    };
    let source: Option<Tensor> = match &req.edit {
        Edit::Substitute { source, .. } => Some(s.store.get(Kind::Input, source)?),
        _ => None,
    };
    let edited = req
        .edit
        .apply(&x, &xbar, source.as_ref())
        .map_err(|e| ApiError::bad("invalid-edit", e.to_string()))?;
    Ok(Json(json!({"input_ref": s.store.put(Kind::Input, &edited)?})))
}

async fn history(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let session = session(&s, &id)?;
    let guard = session.lock().await;
    Ok(Json(json!({"id": id, "bindings": guard.bindings, "history": guard.history})))
}

/// Re-evaluates every history entry from its recorded bindings and config.
async fn replay(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let session = session(&s, &id)?;
    let entries = session.lock().await.history.clone();
    let mut rows = Vec::new();
    let mut all = true;
    for e in entries {
        let (replayed, _) = evaluate_and_store(&s, e.query_text.clone(), e.bindings, e.config).await?;
        let identical = replayed == e.result_ref;
        all &= identical;
        rows.push(json!({"query_text": e.query_text, "result_ref": e.result_ref, "replayed_ref": replayed, "identical": identical}));
    }
    Ok(Json(json!({"identical": all, "entries": rows})))
}

#[derive(Deserialize)]
struct SpectralRequest {
    model: String,
    dataset: String,
    class: usize,
    #[serde(default)]
    options: SpectralOptions,
}

async fn spectral(State(s): State<Shared>, body: Bytes) -> ApiResult<Json<Value>> {
    let req: SpectralRequest = parse(&body)?;
    let model: ModelSpec = s.store.get(Kind::Model, &req.model)?;
    let data: Dataset = s.store.get(Kind::Dataset, &req.dataset)?;
    let (class, options) = (req.class, req.options);
    let out = blocking(move || {
        let rep = deep_representation(&model, &data, class)?;
        let report = spectral_signature(&rep.matrix, &options)?;
        Ok::<_, attrql_core::analysis::AnalysisError>((rep.example_indices, report))
    })
    .await?
    .map_err(|e| ApiError::bad("analysis", e.to_string()))?;
    let (indices, report) = out;
    let flagged_examples: Vec<usize> = report.flagged.iter().map(|&i| indices[i]).collect();
    Ok(Json(json!({"report": report, "example_indices": indices, "flagged_examples": flagged_examples})))
}
