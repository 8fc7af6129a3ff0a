//! HTTP facade: one pipeline and one store file per session.
//!
//! Turns within a session run one at a time on a copy of the pipeline; the
//! copy is persisted and only then swapped in, so readers see either the
//! state before a turn or after it, and a failed turn leaves nothing behind.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, RwLock};

use axum::extract::{Path as UrlPath, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::agents::{compact_store, Engine, Pipeline, RoutingDecision};
use crate::belief::{classify_entropy, EntropyBand, SentimentProfile, Timestamp};
use crate::compression::CompressionAction;
use crate::error::Error;
use crate::key::canonicalize;
use crate::store::{MemoryStore, STORE_EXTENSION};

pub struct Session {
    pub id: String,
    pub path: PathBuf,
    current: RwLock<Arc<Pipeline>>,
    turn_lock: tokio::sync::Mutex<()>,
    queued: AtomicUsize,
}

impl Session {
    fn snapshot(&self) -> Arc<Pipeline> {
        self.current.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn swap(&self, next: Pipeline) {
        *self.current.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(next);
    }
}

pub struct AppState {
    pub engine: Engine,
    pub store_dir: PathBuf,
    pub queue_depth: usize,
    pub token: Option<String>,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
}

impl AppState {
    pub fn new(engine: Engine) -> AppState {
        let c = engine.config.clone();
        AppState {
            store_dir: c.store_dir.clone(),
            queue_depth: c.queue_depth.max(1),
            token: c.service_token.clone().filter(|t| !t.is_empty()),
            engine,
            sessions: RwLock::new(HashMap::new()),
        }
    }

    /// Register every readable store file in the store directory as a session.
    pub fn load_existing(&self) -> crate::error::Result<usize> {
        let Ok(dir) = std::fs::read_dir(&self.store_dir) else { return Ok(0) };
        let mut n = 0;
        for entry in dir.flatten() {
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some(STORE_EXTENSION) {
                continue;
            }
            let Some(id) = path.file_stem().and_then(|s| s.to_str()).map(str::to_string) else { continue };
            match MemoryStore::load(&path).and_then(|s| Pipeline::new(self.engine.clone(), s)) {
                Ok(p) => {
                    self.insert(id, path, p);
                    n += 1;
                }
                Err(e) => tracing::warn!(path = %path.display(), error = %e, "skipping store"),
            }
        }
        Ok(n)
    }

    fn insert(&self, id: String, path: PathBuf, pipeline: Pipeline) -> Arc<Session> {
        let s = Arc::new(Session {
            id: id.clone(),
            path,
            current: RwLock::new(Arc::new(pipeline)),
            turn_lock: tokio::sync::Mutex::new(()),
            queued: AtomicUsize::new(0),
        });
        self.sessions.write().unwrap_or_else(|e| e.into_inner()).insert(id, s.clone());
        s
    }

    fn session(&self, id: &str) -> Result<Arc<Session>, ApiError> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("unknown session {id}")))
    }
}

#[derive(Debug)]
pub struct ApiError(pub StatusCode, pub String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            e if e.is_provider() => StatusCode::BAD_GATEWAY,
            Error::Io(_) => StatusCode::INSUFFICIENT_STORAGE,
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::InvalidQuery(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> crate::error::Result<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(ApiError::from)
}

#[derive(Serialize)]
struct Created {
    session_id: String,
}

async fn create_session(State(st): State<Arc<AppState>>) -> ApiResult<(StatusCode, Json<Created>)> {
    let id = uuid::Uuid::new_v4().simple().to_string();
    let path = session_path(&st.store_dir, &id);
    let store = st.engine.new_store();
    let pipeline = Pipeline::new(st.engine.clone(), store.clone())?;
    let p = path.clone();
    blocking(move || store.save(&p))
        .await
        .map_err(|e| ApiError(StatusCode::INSUFFICIENT_STORAGE, format!("cannot create store: {}", e.1)))?;
    st.insert(id.clone(), path, pipeline);
    Ok((StatusCode::CREATED, Json(Created { session_id: id })))
}

#[derive(Deserialize)]
struct ChatRequest {
    text: String,
}

#[derive(Serialize)]
struct ChatResponse {
    response: String,
    routing: RoutingDecision,
    actions: Vec<CompressionAction>,
    warnings: Vec<String>,
    unit_count: usize,
    global_entropy: f64,
}

/// Releases a queue slot when the request finishes, however it finishes.
struct Slot<'a>(&'a AtomicUsize);

impl Drop for Slot<'_> {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

async fn chat(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<ChatRequest>,
) -> ApiResult<Json<ChatResponse>> {
    let session = st.session(&id)?;
    if req.text.trim().is_empty() {
        return Err(ApiError(StatusCode::BAD_REQUEST, "text is empty".into()));
    }
    if session.queued.fetch_add(1, Ordering::SeqCst) >= st.queue_depth {
        session.queued.fetch_sub(1, Ordering::SeqCst);
        return Err(ApiError(StatusCode::TOO_MANY_REQUESTS, "session queue is full".into()));
    }
    let _slot = Slot(&session.queued);
    let _turn = session.turn_lock.lock().await;

    let mut next = (*session.snapshot()).clone();
    let path = session.path.clone();
    let (next, outcome) = blocking(move || {
        let outcome = next.turn(&req.text)?;
        next.store().save(&path)?;
        Ok((next, outcome))
    })
    .await?;
    let body = ChatResponse {
        response: outcome.response,
        routing: outcome.routing,
        actions: outcome.actions,
        warnings: outcome.warnings,
        unit_count: next.store().len(),
        global_entropy: next.store().global_entropy(),
    };
    session.swap(next);
    Ok(Json(body))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitView {
    pub key: String,
    pub object_id: String,
    pub object_type: String,
    pub aspect: String,
    pub profile: SentimentProfile,
    pub weight: f64,
    pub entropy: f64,
    pub band: EntropyBand,
    pub summary: String,
    pub reason: String,
    pub created_at: Timestamp,
    pub updated_at: Timestamp,
    pub high_entropy_streak: u32,
}

#[derive(Deserialize)]
struct MemoryFilter {
    object_type: Option<String>,
    aspect: Option<String>,
}

fn wildcard(v: Option<String>) -> Option<String> {
    v.filter(|s| !canonicalize(s).is_empty())
}

async fn memories(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(f): Query<MemoryFilter>,
) -> ApiResult<Json<Vec<UnitView>>> {
    let snap = st.session(&id)?.snapshot();
    let store = snap.store();
    let bands = st.engine.config.bands();
    let keys = store.filter_by_metadata(wildcard(f.object_type).as_deref(), wildcard(f.aspect).as_deref());
    let mut out: Vec<UnitView> = keys
        .iter()
        .filter_map(|k| store.get(k).map(|u| (k, u)))
        .map(|(k, u)| UnitView {
            key: k.to_string(),
            object_id: u.object_id.clone(),
            object_type: u.object_type.clone(),
            aspect: u.aspect.clone(),
            profile: u.profile(),
            weight: u.weight,
            entropy: u.entropy(),
            band: classify_entropy(u.entropy(), &bands),
            summary: u.summary.clone(),
            reason: u.reason.clone(),
            created_at: u.created_at,
            updated_at: u.updated_at,
            high_entropy_streak: u.high_entropy_streak,
        })
        .collect();
    out.sort_by(|a, b| b.updated_at.cmp(&a.updated_at).then_with(|| a.key.cmp(&b.key)));
    Ok(Json(out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub unit_count: usize,
    pub global_entropy: f64,
    pub last_objective: Option<f64>,
}

async fn metrics(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Metrics>> {
    let snap = st.session(&id)?.snapshot();
    Ok(Json(Metrics {
        unit_count: snap.store().len(),
        global_entropy: snap.store().global_entropy(),
        last_objective: snap.last_objective(),
    }))
}

async fn compact(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<serde_json::Value>> {
    let session = st.session(&id)?;
    let _turn = session.turn_lock.lock().await;
    let mut next = (*session.snapshot()).clone();
    let path = session.path.clone();
    let engine = st.engine.clone();
    let (next, actions) = blocking(move || {
        let mut store = next.store().clone();
        let actions = compact_store(&engine, &mut store)?;
        if !actions.is_empty() {
            store.save(&path)?;
        }
        next = next.with_store(store);
        Ok((next, actions))
    })
    .await?;
    session.swap(next);
    Ok(Json(json!({ "actions": actions })))
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn require_token(State(st): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    if let Some(token) = &st.token {
        let ok = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|t| t == token);
        if !ok {
            return ApiError(StatusCode::UNAUTHORIZED, "missing or wrong bearer token".into()).into_response();
        }
    }
    next.run(req).await
}

pub fn router(state: Arc<AppState>) -> Router {
    let sessions = Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}/chat", post(chat))
        .route("/v1/sessions/{id}/memories", get(memories))
        .route("/v1/sessions/{id}/metrics", get(metrics))
        .route("/v1/sessions/{id}/compact", post(compact))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new().route("/v1/health", get(health)).merge(sessions).with_state(state)
}

/// Serve until Ctrl-C.
pub async fn serve(engine: Engine, addr: SocketAddr) -> crate::error::Result<()> {
    let state = Arc::new(AppState::new(engine));
    std::fs::create_dir_all(&state.store_dir)?;
    let n = state.load_existing()?;
    tracing::info!(sessions = n, dir = %state.store_dir.display(), "loaded sessions");
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

/// Path of a session's store file inside `dir`.
pub fn session_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.{STORE_EXTENSION}"))
}
