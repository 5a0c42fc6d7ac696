//! JSON-over-HTTP chat service.
//!
//! Routes: `POST /sessions`, `POST /chat`, `GET /health`. The engine is
//! shared read-only; each session sits behind its own mutex so turns on one
//! session are serialized while different sessions proceed in parallel.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use slangbot_core::corpus::IntentLabel;
use slangbot_core::rag::TraceEntry;
use slangbot_core::router::{Clock, ResponsePlan, Route, Session, Timestamp, Turn};
use tower_http::cors::CorsLayer;

use crate::engine::{Engine, SystemClock};
use crate::error::{Error, Result};

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";
pub const DEFAULT_SESSION_TTL_SECONDS: u64 = 1800;
pub const DEFAULT_MAX_REQUEST_BYTES: usize = 64 * 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    pub model: PathBuf,
    pub policy: PathBuf,
    pub kb: PathBuf,
    pub session_ttl_seconds: u64,
    pub max_request_bytes: usize,
    /// Append-only turn log, one JSON object per line.
    pub log: Option<PathBuf>,
}

/// Thread-safe clock whose value is set explicitly.
#[derive(Debug, Default)]
pub struct AtomicClock(AtomicU64);

impl AtomicClock {
    pub fn new(start: Timestamp) -> Self {
        Self(AtomicU64::new(start))
    }

    pub fn set(&self, t: Timestamp) {
        self.0.store(t, Ordering::SeqCst);
    }

    pub fn advance(&self, by: Timestamp) {
        self.0.fetch_add(by, Ordering::SeqCst);
    }
}

impl Clock for AtomicClock {
    fn now_millis(&self) -> Timestamp {
        self.0.load(Ordering::SeqCst)
    }
}

type SharedSession = Arc<Mutex<Session>>;

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

/// Live sessions keyed by id.
#[derive(Debug)]
pub struct SessionStore {
    sessions: Mutex<HashMap<String, SharedSession>>,
    ttl_millis: u64,
}

impl SessionStore {
    pub fn new(ttl_seconds: u64) -> Self {
        Self { sessions: Mutex::new(HashMap::new()), ttl_millis: ttl_seconds.saturating_mul(1000) }
    }

    fn expired(&self, session: &Session, now: Timestamp) -> bool {
        now.saturating_sub(session.last_active) >= self.ttl_millis
    }

    pub fn create(&self, now: Timestamp) -> String {
        let id = uuid::Uuid::new_v4().to_string();
        let session = Arc::new(Mutex::new(Session::new(id.clone(), now)));
        lock(&self.sessions).insert(id.clone(), session);
        id
    }

    /// Looks a session up, dropping it if it has expired.
    pub fn get(&self, id: &str, now: Timestamp) -> Option<SharedSession> {
        let mut sessions = lock(&self.sessions);
        let session = sessions.get(id)?.clone();
        if self.expired(&lock(&session), now) {
            sessions.remove(id);
            return None;
        }
        Some(session)
    }

    pub fn remove(&self, id: &str) {
        lock(&self.sessions).remove(id);
    }

    /// Removes every session idle for at least the TTL and returns how many
    /// were removed.
    pub fn expire_sessions(&self, now: Timestamp) -> usize {
        let mut sessions = lock(&self.sessions);
        let before = sessions.len();
        sessions.retain(|_, s| !self.expired(&lock(s), now));
        before - sessions.len()
    }

    pub fn len(&self) -> usize {
        lock(&self.sessions).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A copy of one session's turn history.
    pub fn history(&self, id: &str) -> Option<Vec<Turn>> {
        let session = lock(&self.sessions).get(id)?.clone();
        let history = lock(&session).history().to_vec();
        Some(history)
    }
}

pub struct AppState {
    engine: RwLock<Option<Arc<Engine>>>,
    pub sessions: SessionStore,
    clock: Arc<dyn Clock + Send + Sync>,
    log: Option<Mutex<File>>,
}

impl AppState {
    pub fn new(ttl_seconds: u64, clock: Arc<dyn Clock + Send + Sync>) -> Self {
        Self { engine: RwLock::new(None), sessions: SessionStore::new(ttl_seconds), clock, log: None }
    }

    pub fn with_engine(self, engine: Engine) -> Self {
        self.set_engine(engine);
        self
    }

    pub fn with_log(mut self, path: &std::path::Path) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
        self.log = Some(Mutex::new(file));
        Ok(self)
    }

    pub fn set_engine(&self, engine: Engine) {
        *self.engine.write().unwrap_or_else(|p| p.into_inner()) = Some(Arc::new(engine));
    }

    pub fn engine(&self) -> Option<Arc<Engine>> {
        self.engine.read().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now_millis()
    }

    fn log_turn(&self, session_id: &str, turn: &Turn) {
        let Some(log) = &self.log else { return };
        let record = LogRecord { session_id, turn };
        let mut line = serde_json::to_string(&record).expect("log record serializes");
        line.push('\n');
        if let Err(e) = lock(log).write_all(line.as_bytes()) {
            tracing::warn!("failed to append to turn log: {e}");
        }
    }
}

#[derive(Serialize)]
struct LogRecord<'a> {
    session_id: &'a str,
    #[serde(flatten)]
    turn: &'a Turn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub session_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub reply: String,
    pub route: Route,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent: Option<IntentLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval_trace: Option<Vec<TraceEntry>>,
    pub session_terminated: bool,
}

impl From<ResponsePlan> for ChatResponse {
    fn from(plan: ResponsePlan) -> Self {
        Self {
            reply: plan.reply,
            route: plan.route,
            intent: plan.intent,
            confidence: plan.confidence,
            retrieval_trace: plan.retrieval_trace,
            session_terminated: plan.session_terminated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model_loaded: bool,
    pub kb_chunks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error: message.into() })).into_response()
}

async fn create_session(State(state): State<Arc<AppState>>) -> Response {
    let id = state.sessions.create(state.now());
    (StatusCode::CREATED, Json(SessionCreated { session_id: id })).into_response()
}

async fn chat(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let request: ChatRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed request: {e}")),
    };
    let Some(engine) = state.engine() else {
        return error(StatusCode::SERVICE_UNAVAILABLE, "model is still loading");
    };
    let Some(session) = state.sessions.get(&request.session_id, state.now()) else {
        return error(StatusCode::NOT_FOUND, format!("unknown or expired session {}", request.session_id));
    };
    let mut session = lock(&session);
    if session.history().last().is_some_and(|t| t.route == Route::Exit) {
        return error(StatusCode::NOT_FOUND, format!("session {} has ended", request.session_id));
    }
    let plan = engine.respond(&mut session, &request.text, state.clock.as_ref());
    if let Some(turn) = session.history().last() {
        state.log_turn(&session.id, turn);
    }
    if plan.session_terminated {
        state.sessions.remove(&session.id);
    }
    (StatusCode::OK, Json(ChatResponse::from(plan))).into_response()
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Health> {
    let engine = state.engine();
    Json(Health {
        status: if engine.is_some() { "ok" } else { "starting" }.to_string(),
        model_loaded: engine.is_some(),
        kb_chunks: engine.map_or(0, |e| e.kb.len()),
    })
}

/// Builds the HTTP router over `state`.
pub fn app(state: Arc<AppState>, max_request_bytes: usize) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/chat", post(chat))
        .route("/health", get(health))
        .layer(DefaultBodyLimit::max(max_request_bytes))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Binds, loads the engine in the background and serves until Ctrl-C.
/// `configure` adjusts the engine after loading (threshold, k).
pub async fn serve(config: ServiceConfig, configure: impl FnOnce(Engine) -> Result<Engine> + Send + 'static) -> Result<()> {
    for path in [&config.model, &config.policy, &config.kb] {
        std::fs::metadata(path).map_err(|e| Error::io(path, e))?;
    }
    let mut state = AppState::new(config.session_ttl_seconds, Arc::new(SystemClock));
    if let Some(log) = &config.log {
        state = state.with_log(log)?;
    }
    let state = Arc::new(state);
    let listener =
        tokio::net::TcpListener::bind(config.bind).await.map_err(|e| Error::io(config.bind.to_string(), e))?;
    tracing::info!("listening on {}", config.bind);

    let (model, policy, kb) = (config.model.clone(), config.policy.clone(), config.kb.clone());
    let engine = tokio::task::spawn_blocking(move || Engine::load(&model, &policy, &kb).and_then(configure));
    let loader_state = state.clone();
    let sweeper_state = state.clone();
    let period = Duration::from_secs(config.session_ttl_seconds.clamp(1, 60));
    tokio::spawn(async move {
        let mut interval = tokio::time::interval(period);
        loop {
            interval.tick().await;
            let removed = sweeper_state.sessions.expire_sessions(sweeper_state.now());
            if removed > 0 {
                tracing::info!("expired {removed} idle session(s)");
            }
        }
    });

    let server = axum::serve(listener, app(state, config.max_request_bytes))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        });
    let server = tokio::spawn(async move { server.await });

    match engine.await {
        Ok(Ok(engine)) => {
            tracing::info!("engine loaded with {} knowledge-base chunks", engine.kb.len());
            loader_state.set_engine(engine);
        }
        Ok(Err(e)) => return Err(e),
        Err(e) => return Err(Error::validation(format!("engine loader panicked: {e}"))),
    }
    server
        .await
        .map_err(|e| Error::validation(format!("server task failed: {e}")))?
        .map_err(|e| Error::io(config.bind.to_string(), e))
}
