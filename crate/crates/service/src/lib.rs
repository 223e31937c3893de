//! HTTP protocol for live allocation sessions.
//!
//! Every request and response body is JSON with a `"v"` version field. Errors
//! share one envelope, `{"v": 1, "error": {"code", "message", "details"}}`.
//! Each session's events are also pushed as server-sent events, in log order.
//!
//! | Method | Path | Body | Success |
//! |---|---|---|---|
//! | POST | `/v1/sessions` | [`CreateSession`] | 201 [`StateResponse`] |
//! | GET | `/v1/sessions` | | 200 [`SessionList`] |
//! | GET | `/v1/sessions/{id}` | | 200 [`StateResponse`] |
//! | DELETE | `/v1/sessions/{id}` | | 204 |
//! | POST | `/v1/sessions/{id}/completions` | [`CompletionRequest`] | 200 [`StateResponse`] |
//! | POST | `/v1/sessions/{id}/overrides` | [`OverrideRequest`] | 200 [`OverrideResponse`] |
//! | GET | `/v1/sessions/{id}/events` | | 200 event stream |
//! | GET | `/v1/sessions/{id}/log` | | 200 JSON lines |

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ergoaog::calibration::CalibrationFile;
use ergoaog::graph::{Aog, AogDocument, ProgressError};
use ergoaog::joint::JointMap;
use ergoaog::session::{
    ClockMode, Completion, Event, Session, SessionConfig, SessionError, SessionView, Suggestion,
};
use futures::stream::{self, Stream, StreamExt};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, Mutex, RwLock};
use tokio_stream::wrappers::BroadcastStream;

/// Version carried in every body.
pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub v: u32,
    pub graph: AogDocument,
    pub calibration: CalibrationFile,
    #[serde(default)]
    pub config: SessionConfig,
    pub initial_wear: JointMap<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompletionRequest {
    pub v: u32,
    #[serde(flatten)]
    pub completion: Completion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverrideRequest {
    pub v: u32,
    pub action: String,
    pub worker: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateResponse {
    pub v: u32,
    pub id: String,
    pub state: SessionView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverrideResponse {
    pub v: u32,
    pub id: String,
    pub suggestion: Suggestion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub t: f64,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionList {
    pub v: u32,
    pub sessions: Vec<SessionSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub details: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub v: u32,
    pub error: ErrorBody,
}

/// An error ready to be sent.
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
                details: Vec::new(),
            },
        }
    }

    fn with_details(mut self, details: Vec<String>) -> Self {
        self.body.details = details;
        self
    }

    fn unknown_session(id: &str) -> Self {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "unknown_session",
            format!("no session `{id}`"),
        )
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(ErrorResponse {
                v: PROTOCOL_VERSION,
                error: self.body,
            }),
        )
            .into_response()
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let message = e.to_string();
        match e {
            SessionError::InvalidGraph(report) => ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "invalid_graph",
                "graph failed validation",
            )
            .with_details(
                report
                    .lines()
                    .map(|l| l.trim().to_string())
                    .filter(|l| !l.is_empty())
                    .collect(),
            ),
            SessionError::Progress(ProgressError::NotEnabled { .. })
            | SessionError::AlreadyComplete => {
                ApiError::new(StatusCode::CONFLICT, "conflict", message)
            }
            SessionError::Progress(_) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "unknown_name", message)
            }
            SessionError::Version { .. } => {
                ApiError::new(StatusCode::BAD_REQUEST, "version_mismatch", message)
            }
            SessionError::Plan(_) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "unplannable", message)
            }
            _ => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_input", message),
        }
    }
}

/// Parses a body, checking `v` before the rest of the schema.
fn parse_body<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, ApiError> {
    let value: serde_json::Value = serde_json::from_slice(bytes)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "malformed_body", e.to_string()))?;
    match value.get("v").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(PROTOCOL_VERSION) => {}
        Some(v) => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "version_mismatch",
                format!("body has v = {v}, server speaks v = {PROTOCOL_VERSION}"),
            ))
        }
        None => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "malformed_body",
                "missing numeric `v` field",
            ))
        }
    }
    serde_json::from_value(value)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "malformed_body", e.to_string()))
}

struct Live {
    session: Session,
    /// Wall-clock origin for sessions in wall mode.
    opened: Instant,
}

struct Handle {
    /// Serializes every mutation of one session.
    live: Mutex<Live>,
    events: broadcast::Sender<Event>,
}

impl Handle {
    /// Sends events logged since `before` to subscribers.
    fn publish(&self, session: &Session, before: usize) {
        for event in &session.events()[before..] {
            let _ = self.events.send(event.clone());
        }
    }
}

/// Shared server state: the open sessions.
#[derive(Clone, Default)]
pub struct AppState {
    sessions: Arc<RwLock<BTreeMap<String, Arc<Handle>>>>,
    next_id: Arc<AtomicU64>,
}

impl AppState {
    pub fn new() -> Self {
        AppState::default()
    }

    async fn handle(&self, id: &str) -> Result<Arc<Handle>, ApiError> {
        self.sessions
            .read()
            .await
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::unknown_session(id))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/sessions", post(create_session).get(list_sessions))
        .route("/v1/sessions/{id}", get(get_state).delete(delete_session))
        .route("/v1/sessions/{id}/completions", post(post_completion))
        .route("/v1/sessions/{id}/overrides", post(post_override))
        .route("/v1/sessions/{id}/events", get(event_stream))
        .route("/v1/sessions/{id}/log", get(get_log))
        .with_state(state)
}

/// Binds `addr` and serves until the process stops.
pub async fn serve(addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(AppState::new())).await
}

fn state_response(id: &str, session: &Session) -> StateResponse {
    StateResponse {
        v: PROTOCOL_VERSION,
        id: id.to_string(),
        state: session.view(),
    }
}

async fn create_session(
    State(app): State<AppState>,
    body: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let request: CreateSession = parse_body(&body)?;
    let graph = Aog::from_document(&request.graph).map_err(|e| {
        ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid_graph",
            e.to_string(),
        )
    })?;
    let models = request.calibration.models().map_err(SessionError::from)?;
    let mut session = Session::start(
        Arc::new(graph),
        models,
        request.config,
        request.initial_wear,
    )?;
    if !session.is_complete() {
        session.suggest_next()?;
    }
    let id = format!("s{}", app.next_id.fetch_add(1, Ordering::SeqCst) + 1);
    let response = state_response(&id, &session);
    let (events, _) = broadcast::channel(1024);
    let handle = Handle {
        live: Mutex::new(Live {
            session,
            opened: Instant::now(),
        }),
        events,
    };
    app.sessions.write().await.insert(id, Arc::new(handle));
    Ok((StatusCode::CREATED, Json(response)))
}

async fn list_sessions(State(app): State<AppState>) -> Json<SessionList> {
    let handles: Vec<(String, Arc<Handle>)> = app
        .sessions
        .read()
        .await
        .iter()
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    let mut sessions = Vec::with_capacity(handles.len());
    for (id, handle) in handles {
        let live = handle.live.lock().await;
        sessions.push(SessionSummary {
            id,
            t: live.session.clock(),
            complete: live.session.is_complete(),
        });
    }
    Json(SessionList {
        v: PROTOCOL_VERSION,
        sessions,
    })
}

async fn get_state(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<StateResponse>, ApiError> {
    let handle = app.handle(&id).await?;
    let live = handle.live.lock().await;
    Ok(Json(state_response(&id, &live.session)))
}

async fn delete_session(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> Result<StatusCode, ApiError> {
    match app.sessions.write().await.remove(&id) {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(ApiError::unknown_session(&id)),
    }
}

async fn post_completion(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<StateResponse>, ApiError> {
    let handle = app.handle(&id).await?;
    let request: CompletionRequest = parse_body(&body)?;
    let mut live = handle.live.lock().await;
    let before = live.session.events().len();
    let mut completion = request.completion;
    if live.session.config().clock == ClockMode::Wall && completion.rest_before_s.is_none() {
        let span = completion
            .scores
            .as_ref()
            .map(|s| s.duration())
            .or(completion.duration_s);
        if let Some(span) = span {
            let idle = live.opened.elapsed().as_secs_f64() - live.session.clock() - span;
            completion.rest_before_s = Some(idle.max(0.0));
        }
    }
    live.session.complete_action(completion)?;
    if !live.session.is_complete() {
        live.session.suggest_next()?;
    }
    handle.publish(&live.session, before);
    Ok(Json(state_response(&id, &live.session)))
}

async fn post_override(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<OverrideResponse>, ApiError> {
    let handle = app.handle(&id).await?;
    let request: OverrideRequest = parse_body(&body)?;
    let mut live = handle.live.lock().await;
    let before = live.session.events().len();
    let suggestion = live
        .session
        .override_suggestion(&request.action, &request.worker)?;
    handle.publish(&live.session, before);
    Ok(Json(OverrideResponse {
        v: PROTOCOL_VERSION,
        id,
        suggestion,
    }))
}

async fn get_log(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let handle = app.handle(&id).await?;
    let live = handle.live.lock().await;
    Ok((
        [(header::CONTENT_TYPE, "application/x-ndjson")],
        live.session.export_log(),
    )
        .into_response())
}

fn to_sse(index: usize, event: &Event) -> SseEvent {
    SseEvent::default()
        .id(index.to_string())
        .event(event.kind())
        .data(serde_json::to_string(event).expect("events always serialize"))
}

/// Past events first, then live ones. Subscribing under the session lock
/// means no event falls between the two parts.
async fn event_stream(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> Result<Sse<impl Stream<Item = Result<SseEvent, Infallible>>>, ApiError> {
    let handle = app.handle(&id).await?;
    let live = handle.live.lock().await;
    let receiver = handle.events.subscribe();
    let past: Vec<Event> = live.session.events().to_vec();
    drop(live);
    let offset = past.len();
    let history = stream::iter(past.into_iter().enumerate().map(|(i, e)| Ok(to_sse(i, &e))));
    let updates = BroadcastStream::new(receiver)
        .take_while(|r| futures::future::ready(r.is_ok()))
        .enumerate()
        .map(move |(i, r)| Ok(to_sse(offset + i, &r.expect("errors end the stream"))));
    Ok(Sse::new(history.chain(updates)).keep_alive(KeepAlive::default()))
}
