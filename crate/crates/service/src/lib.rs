//! HTTP service exposing steerable simulation sessions.
//!
//! See `API.md` in this crate for request and response schemas.

pub mod error;
pub mod session;
pub mod sweep;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path as UrlPath, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use infrasim::bench::generate_predefined;
use infrasim::io::scenario::parse_scenario;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex as SessionLock;

pub use error::ApiError;
pub use session::{Session, SessionSnapshot, SessionView, StepRequest, StepView};
pub use sweep::{run_sweep, Distribution, SweepRequest, SweepSummary};

pub const SNAPSHOT_FORMAT_VERSION: u32 = 1;
const BODY_LIMIT_BYTES: usize = 256 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    pub max_sessions: usize,
    pub snapshot_path: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            max_sessions: 64,
            snapshot_path: None,
        }
    }
}

type Shared = Arc<SessionLock<Session>>;

#[derive(Default)]
struct Registry {
    sessions: BTreeMap<String, Shared>,
    idempotency: BTreeMap<String, String>,
    next_id: u64,
}

#[derive(Clone)]
pub struct AppState {
    registry: Arc<Mutex<Registry>>,
    max_sessions: usize,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    format_version: u32,
    next_id: u64,
    idempotency: BTreeMap<String, String>,
    sessions: Vec<SessionSnapshot>,
}

impl AppState {
    pub fn new(max_sessions: usize) -> Self {
        Self {
            registry: Arc::new(Mutex::new(Registry::default())),
            max_sessions,
        }
    }

    fn registry(&self) -> std::sync::MutexGuard<'_, Registry> {
        self.registry.lock().expect("registry lock poisoned")
    }

    fn get(&self, id: &str) -> Result<Shared, ApiError> {
        self.registry()
            .sessions
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(id))
    }

    fn reserve_id(&self) -> Result<String, ApiError> {
        let mut reg = self.registry();
        if reg.sessions.len() >= self.max_sessions {
            return Err(ApiError::new(
                StatusCode::TOO_MANY_REQUESTS,
                "session_cap",
                format!("session cap of {} reached", self.max_sessions),
            ));
        }
        reg.next_id += 1;
        Ok(format!("s{:06}", reg.next_id))
    }

    fn insert(&self, session: Session) -> Result<(), ApiError> {
        let mut reg = self.registry();
        if reg.sessions.len() >= self.max_sessions {
            return Err(ApiError::new(
                StatusCode::TOO_MANY_REQUESTS,
                "session_cap",
                format!("session cap of {} reached", self.max_sessions),
            ));
        }
        reg.sessions
            .insert(session.id.clone(), Arc::new(SessionLock::new(session)));
        Ok(())
    }

    pub fn session_count(&self) -> usize {
        self.registry().sessions.len()
    }

    pub async fn save_snapshot(&self, path: &Path) -> std::io::Result<()> {
        let (next_id, idempotency, shared) = {
            let reg = self.registry();
            (
                reg.next_id,
                reg.idempotency.clone(),
                reg.sessions.values().cloned().collect::<Vec<_>>(),
            )
        };
        let mut sessions = Vec::with_capacity(shared.len());
        for s in shared {
            sessions.push(s.lock().await.snapshot());
        }
        let snap = Snapshot {
            format_version: SNAPSHOT_FORMAT_VERSION,
            next_id,
            idempotency,
            sessions,
        };
        let json = serde_json::to_vec(&snap).map_err(std::io::Error::other)?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, json)?;
        std::fs::rename(tmp, path)
    }

    pub fn load_snapshot(path: &Path, max_sessions: usize) -> Result<Self, ApiError> {
        let bytes = std::fs::read(path)
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "snapshot", e.to_string()))?;
        let snap: Snapshot = serde_json::from_slice(&bytes)
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "snapshot", e.to_string()))?;
        if snap.format_version > SNAPSHOT_FORMAT_VERSION {
            return Err(ApiError::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                "snapshot",
                format!("snapshot version {} is newer than supported", snap.format_version),
            ));
        }
        let state = Self::new(max_sessions.max(snap.sessions.len()));
        {
            let mut reg = state.registry();
            reg.next_id = snap.next_id;
            reg.idempotency = snap.idempotency;
            for s in snap.sessions {
                let session = Session::restore(s)?;
                reg.sessions
                    .insert(session.id.clone(), Arc::new(SessionLock::new(session)));
            }
        }
        Ok(state)
    }
}

fn parse_body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, ApiError> {
    let bytes: &[u8] = if bytes.is_empty() { b"{}" } else { bytes };
    serde_json::from_slice(bytes).map_err(|e| {
        let status = if e.is_data() {
            StatusCode::UNPROCESSABLE_ENTITY
        } else {
            StatusCode::BAD_REQUEST
        };
        ApiError::new(status, "bad_body", e.to_string())
    })
}

fn blocking_failed(e: tokio::task::JoinError) -> ApiError {
    ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    #[serde(default)]
    predefined: Option<String>,
    #[serde(default)]
    scenario: Option<serde_json::Value>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    policy: Option<String>,
    #[serde(default)]
    include_true_state: bool,
    #[serde(default)]
    timestamps: bool,
    #[serde(default)]
    idempotency_key: Option<String>,
}

async fn health(State(state): State<AppState>) -> Json<serde_json::Value> {
    Json(serde_json::json!({
        "status": "ok",
        "version": env!("CARGO_PKG_VERSION"),
        "sessions": state.session_count(),
        "max_sessions": state.max_sessions,
    }))
}

async fn list_sessions(State(state): State<AppState>) -> Json<Vec<String>> {
    Json(state.registry().sessions.keys().cloned().collect())
}

async fn create_session(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let req: CreateRequest = parse_body(&body)?;
    let key = headers
        .get("idempotency-key")
        .and_then(|v| v.to_str().ok())
        .map(str::to_string)
        .or(req.idempotency_key.clone());
    if let Some(k) = &key {
        let existing = state.registry().idempotency.get(k).cloned();
        if let Some(id) = existing {
            if let Ok(s) = state.get(&id) {
                let view = s.lock().await.view();
                return Ok((StatusCode::OK, Json(view)).into_response());
            }
        }
    }
    let id = state.reserve_id()?;
    let session = tokio::task::spawn_blocking(move || -> Result<Session, ApiError> {
        let config = match (&req.predefined, &req.scenario) {
            (Some(name), None) => generate_predefined(name, req.seed.unwrap_or(0))?,
            (None, Some(value)) => parse_scenario(&serde_json::to_vec(value).expect("value serializes"))?,
            _ => {
                return Err(ApiError::unprocessable(
                    "give exactly one of `predefined` or `scenario`",
                ))
            }
        };
        let seed = req.seed.unwrap_or(config.master_seed);
        Session::create(
            id,
            config,
            seed,
            req.policy.as_deref(),
            req.include_true_state,
            req.timestamps,
        )
    })
    .await
    .map_err(blocking_failed)??;
    let view = session.view();
    state.insert(session)?;
    if let Some(k) = key {
        state.registry().idempotency.insert(k, view.id.clone());
    }
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn read_session(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<SessionView>, ApiError> {
    let s = state.get(&id)?;
    let view = s.lock().await.view();
    Ok(Json(view))
}

async fn delete_session(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<StatusCode, ApiError> {
    let mut reg = state.registry();
    reg.sessions.remove(&id).ok_or_else(|| ApiError::not_found(&id))?;
    reg.idempotency.retain(|_, v| *v != id);
    Ok(StatusCode::NO_CONTENT)
}

async fn step_session(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Json<StepView>, ApiError> {
    let req: StepRequest = parse_body(&body)?;
    let guard = state.get(&id)?.lock_owned().await;
    let view = tokio::task::spawn_blocking(move || {
        let mut guard = guard;
        guard.step(req)
    })
    .await
    .map_err(blocking_failed)??;
    Ok(Json(view))
}

async fn branch_session(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Response, ApiError> {
    let parent = state.get(&id)?;
    let child_id = state.reserve_id()?;
    let child = {
        let guard = parent.lock().await;
        guard.branch(child_id)
    };
    let view = child.view();
    state.insert(child)?;
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn sweep_session(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Json<SweepSummary>, ApiError> {
    let req: SweepRequest = parse_body(&body)?;
    let env = state.get(&id)?.lock().await.env.clone();
    let summary = tokio::task::spawn_blocking(move || run_sweep(&id, &env, &req))
        .await
        .map_err(blocking_failed)??;
    Ok(Json(summary))
}

async fn export_log(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Response, ApiError> {
    let text = state.get(&id)?.lock().await.export();
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response())
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", get(list_sessions).post(create_session))
        .route("/sessions/{id}", get(read_session).delete(delete_session))
        .route("/sessions/{id}/step", post(step_session))
        .route("/sessions/{id}/branch", post(branch_session))
        .route("/sessions/{id}/sweep", post(sweep_session))
        .route("/sessions/{id}/log", get(export_log))
        .layer(DefaultBodyLimit::max(BODY_LIMIT_BYTES))
        .with_state(state)
}

/// Serves until interrupted, then writes the snapshot if one is configured.
pub async fn serve(config: ServiceConfig) -> std::io::Result<()> {
    let state = match &config.snapshot_path {
        Some(p) if p.exists() => AppState::load_snapshot(p, config.max_sessions)
            .map_err(|e| std::io::Error::other(e.message))?,
        _ => AppState::new(config.max_sessions),
    };
    let listener = tokio::net::TcpListener::bind(config.bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state.clone()))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    if let Some(p) = &config.snapshot_path {
        state.save_snapshot(p).await?;
        tracing::info!(path = %p.display(), "snapshot written");
    }
    Ok(())
}
