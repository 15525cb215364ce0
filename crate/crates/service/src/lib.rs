//! HTTP service for interactive smoothness tuning.
//!
//! Sessions hold a split dataset, a fit context and a cache of fits keyed by
//! the full smoothness/pattern map. All state lives in memory and expires
//! after a configurable idle time.

mod error;
mod session;

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex as StdMutex};
use std::time::{Duration, Instant};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use liquid_core::smoothness_tuning::default_grid;
use liquid_core::{Dataset, ModelSpec, Pattern};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tokio::sync::{Mutex, Semaphore};
use uuid::Uuid;

pub use error::{ApiError, ErrorBody};
pub use session::{Divergences, FinalSummary, FitSummary, LockedCharacteristic, Session, SessionState};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub max_rows: usize,
    pub session_ttl: Duration,
    /// Upper bound on fits running at once across all sessions.
    pub max_concurrent_fits: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            max_rows: 1_000_000,
            session_ttl: Duration::from_secs(30 * 60),
            max_concurrent_fits: std::thread::available_parallelism().map_or(2, |n| n.get()),
        }
    }
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

struct Slot {
    session: Mutex<Session>,
    last_access: StdMutex<Instant>,
}

#[derive(Clone)]
pub struct AppState {
    config: Arc<ServiceConfig>,
    sessions: Arc<StdMutex<HashMap<Uuid, Arc<Slot>>>>,
    fits: Arc<Semaphore>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        let permits = config.max_concurrent_fits.max(1);
        Self {
            config: Arc::new(config),
            sessions: Arc::new(StdMutex::new(HashMap::new())),
            fits: Arc::new(Semaphore::new(permits)),
        }
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }

    /// Drops sessions idle for longer than the TTL; returns how many went.
    pub fn purge_expired(&self) -> usize {
        let ttl = self.config.session_ttl;
        let mut sessions = self.sessions.lock().unwrap();
        let before = sessions.len();
        sessions.retain(|_, slot| slot.last_access.lock().unwrap().elapsed() <= ttl);
        before - sessions.len()
    }

    fn slot(&self, raw_id: &str) -> Result<Arc<Slot>, ApiError> {
        let id = Uuid::parse_str(raw_id).map_err(|_| ApiError::session_not_found(raw_id))?;
        let mut sessions = self.sessions.lock().unwrap();
        let slot = sessions.get(&id).cloned().ok_or_else(|| ApiError::session_not_found(raw_id))?;
        let mut last = slot.last_access.lock().unwrap();
        if last.elapsed() > self.config.session_ttl {
            drop(last);
            sessions.remove(&id);
            return Err(ApiError::session_not_found(raw_id));
        }
        *last = Instant::now();
        drop(last);
        Ok(slot)
    }

    async fn blocking<T, F>(&self, f: F) -> Result<T, ApiError>
    where
        F: FnOnce() -> Result<T, ApiError> + Send + 'static,
        T: Send + 'static,
    {
        let _permit = self.fits.acquire().await.map_err(|e| ApiError::internal(e.to_string()))?;
        tokio::task::spawn_blocking(f)
            .await
            .map_err(|e| ApiError::internal(format!("fit task failed: {e}")))?
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// CSV text in the request body.
    Csv(String),
    /// CSV file readable by the server.
    Path(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitParams {
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for SplitParams {
    fn default() -> Self {
        Self {
            val_fraction: 0.3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    pub spec: ModelSpec,
    pub data: DataSource,
    #[serde(default)]
    pub split: SplitParams,
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSessionResponse {
    pub session_id: String,
    pub baseline: Divergences,
    pub next: Option<String>,
    pub ordering: Vec<String>,
    pub grid: Vec<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefitRequest {
    #[serde(default)]
    pub lambda2: BTreeMap<String, f64>,
    #[serde(default)]
    pub patterns: BTreeMap<String, Pattern>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefitResponse {
    pub cache_hit: bool,
    #[serde(flatten)]
    pub fit: FitSummary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LockRequest {
    pub characteristic: String,
    /// Defaults to the characteristic's current value.
    #[serde(default)]
    pub lambda2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LockResponse {
    pub locked: Vec<LockedCharacteristic>,
    pub lambda2: BTreeMap<String, f64>,
    pub current: Divergences,
    pub next: Option<String>,
    #[serde(rename = "final")]
    pub final_summary: Option<FinalSummary>,
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::bad_request("INVALID_REQUEST", e.body_text()))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/refit", post(refit))
        .route("/sessions/{id}/lock", post(lock))
        .route("/sessions/{id}/state", get(get_state))
        .with_state(state)
}

async fn healthz(State(state): State<AppState>) -> impl IntoResponse {
    Json(json!({ "status": "ok", "sessions": state.session_count() }))
}

async fn create_session(
    State(state): State<AppState>,
    payload: Result<Json<CreateSessionRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<CreateSessionResponse>), ApiError> {
    let req = body(payload)?;
    let max_rows = state.config.max_rows;
    let id = Uuid::new_v4();
    let session = state
        .blocking(move || {
            let data = match &req.data {
                DataSource::Csv(text) => Dataset::read_csv(text.as_bytes())?,
                DataSource::Path(path) => Dataset::from_path(path)?,
            };
            data.ensure_max_rows(max_rows)?;
            let grid = req.grid.clone().unwrap_or_else(default_grid);
            Session::create(id, &req.spec, &data, req.split.val_fraction, req.split.seed, grid)
        })
        .await?;
    let response = CreateSessionResponse {
        session_id: id.to_string(),
        baseline: session.baseline(),
        next: session.next(),
        ordering: session.contributions().iter().map(|c| c.name.clone()).collect(),
        grid: session.grid().to_vec(),
    };
    let slot = Arc::new(Slot {
        session: Mutex::new(session),
        last_access: StdMutex::new(Instant::now()),
    });
    state.sessions.lock().unwrap().insert(id, slot);
    Ok((StatusCode::CREATED, Json(response)))
}

async fn refit(
    State(state): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<RefitRequest>, JsonRejection>,
) -> Result<Json<RefitResponse>, ApiError> {
    let req = body(payload)?;
    let slot = state.slot(&id)?;
    let mut session = slot.session.lock().await;
    let plan = session.plan(&req.lambda2, &req.patterns)?;
    if let Some(hit) = session.cached(&plan) {
        session.commit(&plan, hit.clone());
        return Ok(Json(RefitResponse {
            cache_hit: true,
            fit: (*hit).clone(),
        }));
    }
    let ctx = session.context();
    let job = plan.clone();
    let summary = Arc::new(state.blocking(move || session::compute(&ctx, &job)).await?);
    session.commit(&plan, summary.clone());
    Ok(Json(RefitResponse {
        cache_hit: false,
        fit: (*summary).clone(),
    }))
}

async fn lock(
    State(state): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<LockRequest>, JsonRejection>,
) -> Result<Json<LockResponse>, ApiError> {
    let req = body(payload)?;
    let slot = state.slot(&id)?;
    let mut session = slot.session.lock().await;
    let (plan, value) = session.plan_lock(&req.characteristic, req.lambda2)?;
    let summary = match session.cached(&plan) {
        Some(hit) => hit,
        None => {
            let ctx = session.context();
            let job = plan.clone();
            Arc::new(state.blocking(move || session::compute(&ctx, &job)).await?)
        }
    };
    session.commit_lock(&req.characteristic, value, &plan, summary);
    let st = session.state();
    Ok(Json(LockResponse {
        locked: st.locked,
        lambda2: st.lambda2,
        current: st.current,
        next: st.next,
        final_summary: st.final_summary,
    }))
}

async fn get_state(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionState>, ApiError> {
    let slot = state.slot(&id)?;
    let session = slot.session.lock().await;
    Ok(Json(session.state()))
}

/// Binds `addr` and serves until the process ends. Expired sessions are
/// swept in the background.
pub async fn serve(addr: SocketAddr, config: ServiceConfig) -> Result<(), ServeError> {
    let sweep = (config.session_ttl / 4).max(Duration::from_secs(1));
    let state = AppState::new(config);
    let sweeper = state.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(sweep);
        loop {
            tick.tick().await;
            sweeper.purge_expired();
        }
    });
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServeError::Bind { addr, source })?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}
