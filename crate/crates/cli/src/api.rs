//! HTTP+JSON API for interactive evolution sessions.
//!
//! Sessions live in memory. Each is guarded by its own lock so requests to one
//! session are serialized while different sessions proceed independently.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use florae::presets::{DEFAULT_HEIGHT, DEFAULT_WIDTH};
use florae::render::palette;
use florae::session::{Choice, DeployRequest, Deployment, SessionState};
use florae::{Architecture, Error, MutatorConfig, PresetName, ProgramEntry, Session, SessionConfig};

pub const API_VERSION: u32 = 1;

struct Slot {
    session: Session,
    deployment: Option<Deployment>,
}

#[derive(Default)]
pub struct AppState {
    sessions: RwLock<HashMap<String, Arc<Mutex<Slot>>>>,
    next_id: AtomicU64,
}

pub type SharedState = Arc<AppState>;

pub fn router(state: SharedState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/candidates/{index}/frames", get(get_frames))
        .route("/sessions/{id}/choice", post(post_choice))
        .route("/sessions/{id}/deploy", post(post_deploy))
        .route("/sessions/{id}/record", get(get_record))
        .with_state(state)
}

pub async fn serve(addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(SharedState::default())).await
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "session_not_found", format!("no session {id}"))
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::CandidateIndex { .. } => (StatusCode::BAD_REQUEST, "invalid_candidate"),
            Error::SessionClosed => (StatusCode::CONFLICT, "session_closed"),
            Error::UnknownPreset(_)
            | Error::Config(_)
            | Error::Params(_)
            | Error::ParamsLength { .. }
            | Error::Blueprint(_)
            | Error::SeedPlacementFailed { .. } => (StatusCode::BAD_REQUEST, "invalid_request"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_json", r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"api_version": API_VERSION, "code": self.code, "message": self.message});
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn versioned<T: Serialize>(value: T) -> ApiResult<Json<Value>> {
    let mut v = serde_json::to_value(value).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    v["api_version"] = json!(API_VERSION);
    Ok(Json(v))
}

/// Run blocking simulation work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

fn slot(state: &AppState, id: &str) -> ApiResult<Arc<Mutex<Slot>>> {
    state
        .sessions
        .read()
        .unwrap()
        .get(id)
        .cloned()
        .ok_or_else(|| ApiError::not_found(id))
}

#[derive(Debug, Serialize)]
struct CandidateSummary {
    index: usize,
    n_repro: usize,
    n_frames: usize,
}

#[derive(Debug, Serialize)]
struct SessionSummary<'a> {
    session_id: &'a str,
    preset: PresetName,
    arch: Architecture,
    mutator: MutatorConfig,
    generation: usize,
    state: SessionState,
    frame_width: usize,
    frame_height: usize,
    candidates: Vec<CandidateSummary>,
    history: &'a [Choice],
    deployed: bool,
}

fn summary(slot: &Slot) -> SessionSummary<'_> {
    let s = &slot.session;
    let (frame_width, frame_height) = s.frame_size();
    SessionSummary {
        session_id: &s.id,
        preset: s.config.preset,
        arch: s.config.arch,
        mutator: s.config.mutator,
        generation: s.generation,
        state: s.state,
        frame_width,
        frame_height,
        candidates: s
            .candidates
            .iter()
            .enumerate()
            .map(|(index, c)| CandidateSummary {
                index,
                n_repro: c.n_repro,
                n_frames: c.frames.len(),
            })
            .collect(),
        history: &s.history,
        deployed: slot.deployment.is_some(),
    }
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum MutatorName {
    Basic,
    Adaptive,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    #[serde(default = "default_preset")]
    preset: PresetName,
    #[serde(default)]
    arch: Option<Architecture>,
    #[serde(default)]
    mutator: Option<MutatorName>,
    #[serde(default)]
    sigma: Option<f64>,
    #[serde(default)]
    n_candidates: Option<usize>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    frame_every: Option<u64>,
    /// Initial logic parameters; defaults to the architecture's initial policy.
    #[serde(default)]
    params: Option<Vec<f64>>,
}

fn default_preset() -> PresetName {
    PresetName::Persistence
}

/// More candidates than this would make one request run for minutes.
const MAX_CANDIDATES: usize = 64;

async fn create_session(
    State(state): State<SharedState>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let Json(req) = body?;
    let defaults = SessionConfig::default();
    let sigma = req.sigma.unwrap_or(defaults.mutator.base_sigma);
    let mutator = match req.mutator {
        Some(MutatorName::Adaptive) => MutatorConfig::adaptive(sigma),
        Some(MutatorName::Basic) | None => MutatorConfig::basic(sigma),
    };
    let arch = req.arch.unwrap_or(defaults.arch);
    let n_candidates = req.n_candidates.unwrap_or(defaults.n_candidates);
    if n_candidates == 0 || n_candidates > MAX_CANDIDATES {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "invalid_request",
            format!("n_candidates must be in 1..={MAX_CANDIDATES}"),
        ));
    }
    let config = SessionConfig {
        preset: req.preset,
        arch,
        mutator,
        n_candidates,
        seed: req.seed.unwrap_or(defaults.seed),
        frame_every: req.frame_every.unwrap_or(defaults.frame_every),
    };
    let init = ProgramEntry::new(req.params.unwrap_or_else(|| arch.init()), &mutator);
    let id = format!("s{}", state.next_id.fetch_add(1, Ordering::Relaxed) + 1);
    let session = blocking(move || Ok(Session::start(id, config, init)?)).await?;
    let slot = Slot {
        session,
        deployment: None,
    };
    let body = versioned(summary(&slot))?;
    state
        .sessions
        .write()
        .unwrap()
        .insert(slot.session.id.clone(), Arc::new(Mutex::new(slot)));
    Ok((StatusCode::CREATED, body))
}

async fn get_session(State(state): State<SharedState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let slot = slot(&state, &id)?;
    let guard = slot.lock().unwrap();
    versioned(summary(&guard))
}

async fn get_frames(
    State(state): State<SharedState>,
    Path((id, index)): Path<(String, usize)>,
) -> ApiResult<Json<Value>> {
    let slot = slot(&state, &id)?;
    let guard = slot.lock().unwrap();
    let s = &guard.session;
    let c = s.candidates.get(index).ok_or(Error::CandidateIndex {
        index,
        len: s.candidates.len(),
    })?;
    let (width, height) = s.frame_size();
    versioned(json!({
        "session_id": s.id,
        "generation": s.generation,
        "index": index,
        "width": width,
        "height": height,
        "palette": palette(),
        "frames": c.frames,
        "n_repro": c.n_repro,
    }))
}

#[derive(Debug, Deserialize)]
pub struct ChoiceRequest {
    index: usize,
}

async fn post_choice(
    State(state): State<SharedState>,
    Path(id): Path<String>,
    body: Result<Json<ChoiceRequest>, JsonRejection>,
) -> ApiResult<Json<Value>> {
    let Json(req) = body?;
    let slot = slot(&state, &id)?;
    blocking(move || {
        let mut guard = slot.lock().unwrap();
        guard.session.choose(req.index)?;
        versioned(summary(&guard))
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeployBody {
    preset: Option<PresetName>,
    width: Option<usize>,
    height: Option<usize>,
    steps: Option<u64>,
    reps: Option<usize>,
}

async fn post_deploy(
    State(state): State<SharedState>,
    Path(id): Path<String>,
    body: Result<Json<DeployBody>, JsonRejection>,
) -> ApiResult<Json<Value>> {
    let Json(b) = body?;
    let slot = slot(&state, &id)?;
    blocking(move || {
        let mut guard = slot.lock().unwrap();
        let req = DeployRequest {
            preset: b.preset.unwrap_or(guard.session.config.preset),
            width: b.width.unwrap_or(DEFAULT_WIDTH),
            height: b.height.unwrap_or(DEFAULT_HEIGHT),
            steps: b.steps.unwrap_or(1000),
            reps: b.reps.unwrap_or(16),
        };
        let d = guard.session.deploy(&req)?;
        let body = versioned(json!({
            "session_id": guard.session.id,
            "preset": req.preset,
            "width": req.width,
            "height": req.height,
            "steps": req.steps,
            "report": d.report,
        }));
        guard.deployment = Some(d);
        body
    })
    .await
}

async fn get_record(State(state): State<SharedState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let slot = slot(&state, &id)?;
    let guard = slot.lock().unwrap();
    let d = guard
        .deployment
        .as_ref()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_deployed", "session has not been deployed"))?;
    versioned(json!({"session_id": guard.session.id, "record": d.record}))
}
