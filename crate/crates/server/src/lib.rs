//! HTTP facade over pipeline sessions, the catalog and route results.
//!
//! ```text
//! POST /sessions                {query, mode}                -> 201 session
//! GET  /sessions/{id}                                        -> session
//! POST /sessions/{id}/advance   {override?, request_id?, stage?} -> session
//! GET  /sessions/{id}/result                                 -> execution result
//! GET  /catalog                                              -> catalog
//! GET  /health                                               -> {"status": "ok"}
//! ```
//!
//! A request id may also arrive in the `Request-Id` header.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::{Path as UrlPath, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tokio::sync::{Mutex, RwLock};

use metaroute::agent::{DecisionProvider, ProviderSpec};
use metaroute::catalog::load_catalog;
use metaroute::ingest::{Gazetteer, StubVisualAnswerer};
use metaroute::pipeline::{DataContext, Environment, Mode, PipelineError, Session, Stage};

pub const REQUEST_ID_HEADER: &str = "request-id";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    pub bind: SocketAddr,
    pub catalog: PathBuf,
    pub gazetteer: PathBuf,
    pub data_root: PathBuf,
    /// Canned answers for camera images; every image is "unknown" without it.
    #[serde(default)]
    pub vqa: Option<PathBuf>,
    pub provider: ProviderSpec,
    #[serde(default = "default_max_sessions")]
    pub max_sessions: usize,
    #[serde(default)]
    pub snapshot: Option<PathBuf>,
}

fn default_max_sessions() -> usize {
    1024
}

impl ServerConfig {
    pub fn from_toml(text: &str) -> Result<Self, ServerError> {
        toml::from_str(text).map_err(|e| ServerError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ServerError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServerError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ServerError> {
        let mut must_exist = vec![("catalog", &self.catalog), ("gazetteer", &self.gazetteer), ("data root", &self.data_root)];
        if let Some(v) = &self.vqa {
            must_exist.push(("vqa", v));
        }
        if let ProviderSpec::Scripted(p) = &self.provider {
            must_exist.push(("scripted provider", p));
        }
        for (what, p) in must_exist {
            if !p.exists() {
                return Err(ServerError::Config(format!("{what} path {} does not exist", p.display())));
            }
        }
        if self.max_sessions == 0 {
            return Err(ServerError::Config("max_sessions must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot bind: {0}")]
    Bind(#[from] std::io::Error),
}

/// Builds the pipeline environment a config describes.
pub fn environment(config: &ServerConfig) -> Result<Environment, ServerError> {
    config.validate()?;
    let provider = config
        .provider
        .build()
        .map_err(|e| ServerError::Config(e.to_string()))?;
    environment_with(config, provider)
}

/// Like [`environment`] but with a caller-supplied provider.
pub fn environment_with(config: &ServerConfig, provider: Arc<dyn DecisionProvider>) -> Result<Environment, ServerError> {
    let config_err = |e: &dyn std::fmt::Display| ServerError::Config(e.to_string());
    let catalog = load_catalog(&config.catalog).map_err(|e| config_err(&e))?;
    let gazetteer = Gazetteer::load(&config.gazetteer).map_err(|e| config_err(&e))?;
    let mut data = DataContext::new(&config.data_root, gazetteer);
    if let Some(v) = &config.vqa {
        data = data.with_vqa(Arc::new(StubVisualAnswerer::load(v).map_err(|e| config_err(&e))?));
    }
    Ok(Environment::new(Arc::new(catalog), provider, data))
}

type Slot = Arc<Mutex<Session>>;

/// Shared server state. Each session sits behind its own lock, so requests
/// for one session run one at a time while different sessions proceed
/// concurrently.
#[derive(Clone)]
pub struct AppState {
    env: Arc<Environment>,
    sessions: Arc<RwLock<BTreeMap<String, Slot>>>,
    max_sessions: usize,
    snapshot: Option<Arc<SnapshotFile>>,
}

struct SnapshotFile {
    path: PathBuf,
    write: Mutex<()>,
}

fn session_number(id: &str) -> Option<u64> {
    id.strip_prefix('s')?.parse().ok()
}

impl AppState {
    pub fn new(env: Environment, max_sessions: usize) -> Self {
        AppState {
            env: Arc::new(env),
            sessions: Arc::default(),
            max_sessions: max_sessions.max(1),
            snapshot: None,
        }
    }

    /// Restores sessions from `path` if it exists and writes all sessions
    /// back after every change.
    pub fn with_snapshot(mut self, path: impl Into<PathBuf>) -> Result<Self, ServerError> {
        let path = path.into();
        let restored: Vec<Session> = match std::fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text)
                .map_err(|e| ServerError::Config(format!("snapshot {}: {e}", path.display())))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(ServerError::Config(format!("snapshot {}: {e}", path.display()))),
        };
        let next = restored.iter().filter_map(|s| session_number(&s.id)).max().unwrap_or(0) + 1;
        let env = Arc::try_unwrap(self.env)
            .map_err(|_| ServerError::Config("state already shared".into()))?
            .with_first_session_number(next);
        self.env = Arc::new(env);
        self.sessions = Arc::new(RwLock::new(
            restored
                .into_iter()
                .map(|s| (s.id.clone(), Arc::new(Mutex::new(s))))
                .collect(),
        ));
        self.snapshot = Some(Arc::new(SnapshotFile {
            path,
            write: Mutex::new(()),
        }));
        Ok(self)
    }

    pub fn from_config(config: &ServerConfig) -> Result<Self, ServerError> {
        let state = AppState::new(environment(config)?, config.max_sessions);
        match &config.snapshot {
            Some(p) => state.with_snapshot(p),
            None => Ok(state),
        }
    }

    pub fn environment(&self) -> &Environment {
        &self.env
    }

    async fn slot(&self, id: &str) -> Result<Slot, ApiError> {
        self.sessions
            .read()
            .await
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no session `{id}`")))
    }

    async fn persist(&self) {
        let Some(snap) = &self.snapshot else { return };
        let _guard = snap.write.lock().await;
        let slots: Vec<Slot> = self.sessions.read().await.values().cloned().collect();
        let mut all = Vec::with_capacity(slots.len());
        for slot in slots {
            all.push(slot.lock().await.clone());
        }
        let text = serde_json::to_string(&all).expect("sessions serialize");
        let tmp = snap.path.with_extension("tmp");
        let written = std::fs::write(&tmp, text).and_then(|_| std::fs::rename(&tmp, &snap.path));
        if let Err(e) = written {
            tracing::warn!(path = %snap.path.display(), error = %e, "snapshot not written");
        }
    }
}

/// Error body `{code, message}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code: code.into(),
                message: message.into(),
            },
        }
    }

    fn not_found(message: String) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let (status, code) = match &e {
            PipelineError::EmptyQuery => (StatusCode::BAD_REQUEST, "empty_query"),
            PipelineError::InvalidOverride(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_override"),
            PipelineError::StageOrderViolation { .. } => (StatusCode::CONFLICT, "stage_order_violation"),
            PipelineError::AgentFailure { .. } => (StatusCode::BAD_GATEWAY, "agent_failure"),
            PipelineError::InterfaceError { .. } => (StatusCode::INTERNAL_SERVER_ERROR, "interface_error"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSession {
    pub query: String,
    #[serde(default = "automatic")]
    pub mode: Mode,
}

fn automatic() -> Mode {
    Mode::Automatic
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AdvanceRequest {
    /// Replacement selection; absent or empty accepts the proposal.
    #[serde(default, rename = "override")]
    pub override_: Option<Vec<String>>,
    #[serde(default)]
    pub request_id: Option<String>,
    /// Stage the client believes the session is at.
    #[serde(default)]
    pub stage: Option<Stage>,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/catalog", get(catalog))
        .route("/sessions", post(create_session))
        .route("/sessions/:id", get(get_session))
        .route("/sessions/:id/advance", post(advance))
        .route("/sessions/:id/result", get(result))
        .with_state(state)
}

async fn health() -> Json<Value> {
    Json(json!({"status": "ok"}))
}

async fn catalog(State(state): State<AppState>) -> Json<Value> {
    Json(serde_json::to_value(state.env.catalog()).expect("catalog serializes"))
}

async fn create_session(
    State(state): State<AppState>,
    Json(req): Json<CreateSession>,
) -> Result<(StatusCode, Json<Session>), ApiError> {
    let session = {
        let mut sessions = state.sessions.write().await;
        if sessions.len() >= state.max_sessions {
            return Err(ApiError::new(
                StatusCode::TOO_MANY_REQUESTS,
                "session_limit",
                format!("at most {} sessions", state.max_sessions),
            ));
        }
        let s = state.env.open_session(&req.query, req.mode)?;
        sessions.insert(s.id.clone(), Arc::new(Mutex::new(s.clone())));
        s
    };
    state.persist().await;
    Ok((StatusCode::CREATED, Json(session)))
}

async fn get_session(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<Session>, ApiError> {
    let slot = state.slot(&id).await?;
    let s = slot.lock().await.clone();
    Ok(Json(s))
}

async fn advance(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
    Json(req): Json<AdvanceRequest>,
) -> Result<Json<Session>, ApiError> {
    let slot = state.slot(&id).await?;
    let request_id = req.request_id.or_else(|| {
        headers
            .get(REQUEST_ID_HEADER)
            .and_then(|v| v.to_str().ok())
            .map(str::to_string)
    });
    let mut guard = slot.lock_owned().await;
    let env = state.env.clone();
    // agent calls block, so they run off the async workers
    let (guard, out) = tokio::task::spawn_blocking(move || {
        let out = env.advance_request(&mut guard, request_id.as_deref(), req.stage, req.override_);
        (guard, out)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    let session = guard.clone();
    drop(guard);
    let changed = out.as_ref().map_or(session.stage == Stage::Failed, |applied| *applied);
    if changed {
        state.persist().await;
    }
    out?;
    Ok(Json(session))
}

async fn result(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<Value>, ApiError> {
    let slot = state.slot(&id).await?;
    let s = slot.lock().await;
    match &s.result {
        Some(r) => Ok(Json(serde_json::to_value(r).expect("result serializes"))),
        None => Err(ApiError::not_found(format!("session `{id}` has no result; it is at {}", s.stage))),
    }
}

/// Binds and serves until Ctrl-C or SIGTERM.
pub async fn serve(config: ServerConfig) -> Result<(), ServerError> {
    let state = AppState::from_config(&config)?;
    let listener = tokio::net::TcpListener::bind(config.bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown_signal())
        .await?;
    Ok(())
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        if let Ok(mut s) = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            s.recv().await;
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}
