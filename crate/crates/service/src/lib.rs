//! HTTP sessions in which a person plays the comparison oracle. Completed
//! sessions feed a per-dataset learned state that persists across restarts.
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | POST | `/api/sessions` | `{dataset_id, policy_mode?, epsilon?}` | [`SessionView`] |
//! | POST | `/api/sessions/{id}/answer` | `{choice, step?}` | [`SessionView`] |
//! | POST | `/api/sessions/{id}/found` | `{object_id}` | [`FoundView`] |
//! | GET | `/api/sessions/{id}/stats` | | [`StatsView`] |
//! | GET | `/api/datasets` | | `[DatasetInfo]` |
//!
//! Errors are `{"error": message}` with status 404 (unknown dataset or
//! session), 409 (terminal session or stale `step`) or 422 (invalid body).

pub mod catalog;
pub mod journal;
pub mod session;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cmpsearch::dataset::Display;
use cmpsearch::learning::{StateSnapshot, DEFAULT_EPSILON};
use cmpsearch::{ObjectId, SeedStream};
use serde::{Deserialize, Serialize};

use catalog::{Catalog, DatasetInfo, Entry};
use journal::{Completion, Journal};
use session::{Choice, PolicyMode, Session, Status};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30 * 60);

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub seed: u64,
    /// Directory for the event log and snapshots; `None` keeps state in memory.
    pub data_dir: Option<PathBuf>,
    pub timeout: Duration,
    /// Completions between snapshots; 0 disables periodic snapshots.
    pub snapshot_every: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig { seed: 0, data_dir: None, timeout: DEFAULT_TIMEOUT, snapshot_every: 100 }
    }
}

#[derive(Debug, PartialEq, Eq)]
pub enum ApiError {
    NotFound(String),
    Conflict(String),
    Invalid(String),
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl From<cmpsearch::Error> for ApiError {
    fn from(e: cmpsearch::Error) -> Self {
        ApiError::Internal(e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::Invalid(e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        let (ApiError::NotFound(m) | ApiError::Conflict(m) | ApiError::Invalid(m) | ApiError::Internal(m)) = self;
        (status, Json(serde_json::json!({ "error": m }))).into_response()
    }
}

#[derive(Clone, Debug, Deserialize)]
pub struct CreateRequest {
    pub dataset_id: String,
    #[serde(default)]
    pub policy_mode: PolicyMode,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

#[derive(Clone, Debug, Deserialize)]
pub struct AnswerRequest {
    pub choice: Choice,
    /// History length the client last saw; a mismatch is a stale answer.
    #[serde(default)]
    pub step: Option<u64>,
}

#[derive(Clone, Debug, Deserialize)]
pub struct FoundRequest {
    pub object_id: ObjectId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectView {
    pub id: ObjectId,
    pub display: Display,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub status: Status,
    pub step: u64,
    pub current: ObjectView,
    pub proposed: ObjectView,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoundView {
    pub session_id: String,
    pub status: Status,
    pub cost: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsView {
    pub session_id: String,
    pub dataset_id: String,
    pub policy_mode: PolicyMode,
    pub status: Status,
    pub cost: u64,
    pub history_length: u64,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

/// Shared service state. Learned-state writes happen only while holding the
/// journal lock, so the log order is the order of application.
pub struct AppState {
    catalog: Catalog,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    journal: Mutex<Option<Journal>>,
    seeds: SeedStream,
    created: AtomicU64,
    completed: AtomicU64,
    timeout: Duration,
}

impl AppState {
    /// Builds the state, restoring learned state from `config.data_dir` if set.
    pub fn new(catalog: Catalog, config: &ServiceConfig) -> cmpsearch::Result<Self> {
        let journal = match &config.data_dir {
            Some(dir) => Some(Journal::open(dir, &catalog, config.snapshot_every)?),
            None => None,
        };
        let completed = journal.as_ref().map_or(0, |j| j.next_seq() - 1);
        Ok(AppState {
            catalog,
            sessions: Mutex::new(HashMap::new()),
            journal: Mutex::new(journal),
            seeds: SeedStream::new(config.seed),
            created: AtomicU64::new(0),
            completed: AtomicU64::new(completed),
            timeout: config.timeout,
        })
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    /// Learned state of one dataset.
    pub fn learned_snapshot(&self, dataset_id: &str) -> Option<StateSnapshot> {
        self.catalog.get(dataset_id).map(|e| e.learned.read().unwrap_or_else(|p| p.into_inner()).snapshot())
    }

    fn view(s: &Session) -> SessionView {
        let object = |id| ObjectView { id, display: s.entry.display(id) };
        SessionView {
            session_id: s.id.clone(),
            status: s.status,
            step: s.history.len() as u64,
            current: object(s.current),
            proposed: object(s.proposed),
        }
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        lock(&self.sessions).get(id).cloned().ok_or_else(|| ApiError::NotFound(format!("unknown session {id}")))
    }

    /// Locks a session, expiring it first if it sat idle past the timeout.
    fn active<'a>(&self, s: &'a Mutex<Session>) -> Result<MutexGuard<'a, Session>, ApiError> {
        let mut g = lock(s);
        g.expire(self.timeout);
        if g.status != Status::Active {
            return Err(ApiError::Conflict(format!("session {} is {:?}", g.id, g.status).to_lowercase()));
        }
        Ok(g)
    }

    pub fn create_session(&self, req: &CreateRequest) -> Result<SessionView, ApiError> {
        let entry: Arc<Entry> = self
            .catalog
            .get(&req.dataset_id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("unknown dataset {}", req.dataset_id)))?;
        if !(req.epsilon > 0.0 && req.epsilon <= 1.0) {
            return Err(ApiError::Invalid(format!("epsilon must lie in (0,1], got {}", req.epsilon)));
        }
        if entry.len() < 2 {
            return Err(ApiError::Invalid("dataset needs at least two objects".into()));
        }
        let k = self.created.fetch_add(1, Ordering::Relaxed);
        let id = format!("{:016x}", self.seeds.seed("session-id", k));
        let session = Session::start(id.clone(), entry, req.policy_mode, req.epsilon, self.seeds.rng("session", k))?;
        let view = Self::view(&session);
        lock(&self.sessions).insert(id, Arc::new(Mutex::new(session)));
        Ok(view)
    }

    pub fn answer(&self, id: &str, req: &AnswerRequest) -> Result<SessionView, ApiError> {
        let s = self.session(id)?;
        let mut g = self.active(&s)?;
        if let Some(step) = req.step {
            if step != g.cost() {
                return Err(ApiError::Conflict(format!("stale answer for step {step}; session is at step {}", g.cost())));
            }
        }
        g.answer(req.choice)?;
        Ok(Self::view(&g))
    }

    pub fn found(&self, id: &str, req: &FoundRequest) -> Result<FoundView, ApiError> {
        let s = self.session(id)?;
        let mut g = self.active(&s)?;
        let history = g.finish(req.object_id).map_err(ApiError::Invalid)?.to_vec();
        let mut journal = lock(&self.journal);
        let event = Completion {
            seq: self.completed.fetch_add(1, Ordering::SeqCst) + 1,
            dataset_id: g.entry.id.clone(),
            target: req.object_id,
            history,
        };
        journal::apply(&self.catalog, &event)?;
        if let Some(j) = journal.as_mut() {
            j.record(&event, &self.catalog)?;
        }
        Ok(FoundView { session_id: g.id.clone(), status: g.status, cost: g.cost() })
    }

    pub fn stats(&self, id: &str) -> Result<StatsView, ApiError> {
        let s = self.session(id)?;
        let mut g = lock(&s);
        g.expire(self.timeout);
        Ok(StatsView {
            session_id: g.id.clone(),
            dataset_id: g.entry.id.clone(),
            policy_mode: g.mode,
            status: g.status,
            cost: g.cost(),
            history_length: g.history.len() as u64,
        })
    }

    /// Marks idle sessions abandoned; returns how many were.
    pub fn sweep(&self) -> usize {
        let sessions: Vec<_> = lock(&self.sessions).values().cloned().collect();
        sessions.iter().filter(|s| lock(s).expire(self.timeout)).count()
    }

    /// Writes a snapshot now, if persistence is enabled.
    pub fn snapshot(&self) -> cmpsearch::Result<()> {
        match lock(&self.journal).as_mut() {
            Some(j) => j.snapshot(&self.catalog),
            None => Ok(()),
        }
    }
}

type Shared = State<Arc<AppState>>;

async fn list_datasets(State(app): Shared) -> Json<Vec<DatasetInfo>> {
    Json(app.catalog.list())
}

async fn create(State(app): Shared, body: Result<Json<CreateRequest>, JsonRejection>) -> Result<Json<SessionView>, ApiError> {
    Ok(Json(app.create_session(&body?.0)?))
}

async fn answer(
    State(app): Shared,
    Path(id): Path<String>,
    body: Result<Json<AnswerRequest>, JsonRejection>,
) -> Result<Json<SessionView>, ApiError> {
    Ok(Json(app.answer(&id, &body?.0)?))
}

async fn found(
    State(app): Shared,
    Path(id): Path<String>,
    body: Result<Json<FoundRequest>, JsonRejection>,
) -> Result<Json<FoundView>, ApiError> {
    let req = body?.0;
    // Fsync on the event log must not stall the async workers.
    tokio::task::spawn_blocking(move || app.found(&id, &req))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
        .map(Json)
}

async fn stats(State(app): Shared, Path(id): Path<String>) -> Result<Json<StatsView>, ApiError> {
    Ok(Json(app.stats(&id)?))
}

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/datasets", get(list_datasets))
        .route("/api/sessions", post(create))
        .route("/api/sessions/{id}/answer", post(answer))
        .route("/api/sessions/{id}/found", post(found))
        .route("/api/sessions/{id}/stats", get(stats))
        .with_state(app)
}

/// Serves until Ctrl-C, sweeping idle sessions every minute and writing a
/// final snapshot on shutdown.
pub async fn serve(listener: tokio::net::TcpListener, app: Arc<AppState>) -> std::io::Result<()> {
    let sweeper = {
        let app = app.clone();
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(Duration::from_secs(60));
            loop {
                tick.tick().await;
                let n = app.sweep();
                if n > 0 {
                    tracing::info!(abandoned = n, "expired idle sessions");
                }
            }
        })
    };
    tracing::info!(addr = %listener.local_addr()?, "listening");
    let result = axum::serve(listener, router(app.clone()))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await;
    sweeper.abort();
    if let Err(e) = app.snapshot() {
        tracing::error!(error = %e, "final snapshot failed");
    }
    result
}
