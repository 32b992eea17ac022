//! JSON-over-HTTP front end for an [`Engine`].
//!
//! | Method | Path | Success |
//! |---|---|---|
//! | GET  | `/healthz` | 200 `{"status":"ok"}` |
//! | GET  | `/sessions` | 200 `{"sessions":[id…]}` |
//! | POST | `/sessions` | 201 session view |
//! | GET  | `/sessions/{id}` | 200 session view |
//! | POST | `/sessions/{id}/turns` | 201 turn view |
//! | GET  | `/sessions/{id}/turns/{k}/audio` | 200 `audio/wav` |
//! | GET  | `/sessions/{id}/turns/{k}/plan` | 200 plan JSON |
//!
//! Failures are `{"code", "message", "status"}` problem objects.

use std::future::Future;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;

use super::{Engine, Session, SessionConfig, SessionError, Turn, TurnOptions, TurnStatus};
use crate::mixer::MixReport;
use crate::plan::{Plan, ValidationReport};
use crate::planner::{PlannerError, TemplateVariant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub code: String,
    pub message: String,
    pub status: u16,
}

/// A [`SessionError`] (or request error) rendered as a problem response.
#[derive(Debug)]
pub struct ApiError(pub SessionError);

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        ApiError(e)
    }
}

pub fn status_for(error: &SessionError) -> StatusCode {
    match error {
        SessionError::NotFound(_) => StatusCode::NOT_FOUND,
        SessionError::NotRendered(_) | SessionError::AlreadyExists(_) => StatusCode::CONFLICT,
        SessionError::InvalidRequest(_) => StatusCode::BAD_REQUEST,
        SessionError::Planner(PlannerError::BackendError { .. } | PlannerError::NoResponse) => StatusCode::BAD_GATEWAY,
        SessionError::Planner(PlannerError::PlanRejected { .. }) => StatusCode::UNPROCESSABLE_ENTITY,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = status_for(&self.0);
        let body = Problem { code: self.0.code().into(), message: self.0.to_string(), status: status.as_u16() };
        (status, Json(body)).into_response()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnView {
    pub index: usize,
    pub user_message: String,
    pub status: TurnStatus,
    pub attempts: u32,
    pub plan: Option<Plan>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<MixReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub seeds: Vec<u64>,
    pub audio_url: Option<String>,
    pub plan_url: Option<String>,
    pub raw_planner_response: String,
    pub created_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub created_at: u64,
    pub planner: String,
    pub total_duration: f64,
    pub template_variant: TemplateVariant,
    pub sample_rate: u32,
    pub turns: Vec<TurnView>,
}

fn turn_view(engine: &Engine, id: &str, turn: Turn) -> TurnView {
    let k = turn.index();
    let base = format!("/sessions/{id}/turns/{k}");
    let rendered = turn.audio_path.is_some();
    TurnView {
        index: k,
        report: if rendered { engine.store().read_turn_report(id, k).ok() } else { None },
        user_message: turn.record.user_message,
        status: turn.record.status,
        attempts: turn.record.attempts,
        plan_url: turn.plan.is_some().then(|| format!("{base}/plan")),
        plan: turn.plan,
        validation: turn.record.validation,
        error: turn.record.error,
        seeds: turn.record.seeds,
        audio_url: rendered.then(|| format!("{base}/audio")),
        raw_planner_response: turn.raw_planner_response,
        created_at: turn.record.created_at,
    }
}

fn session_view(engine: &Engine, session: Session) -> SessionView {
    let id = session.settings.id.clone();
    SessionView {
        created_at: session.settings.created_at,
        planner: session.settings.planner.clone(),
        total_duration: session.settings.config.total_duration,
        template_variant: session.settings.config.template_variant,
        sample_rate: session.settings.config.sample_rate,
        turns: session.turns.into_iter().map(|t| turn_view(engine, &id, t)).collect(),
        id,
    }
}

/// Body of `POST /sessions`; every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct CreateSessionRequest {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(flatten)]
    pub config: SessionConfig,
}

/// Body of `POST /sessions/{id}/turns`.
#[derive(Debug, Clone, Deserialize)]
pub struct TurnRequest {
    pub message: String,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn parse_body<T: serde::de::DeserializeOwned + Default>(bytes: &[u8]) -> Result<T, ApiError> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(bytes).map_err(|e| ApiError(SessionError::InvalidRequest(format!("request body: {e}"))))
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, SessionError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(SessionError::Store(format!("worker task failed: {e}"))))?
        .map_err(ApiError)
}

type AppState = Arc<Engine>;

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({"status": "ok"}))
}

async fn list_sessions(State(engine): State<AppState>) -> Result<Json<serde_json::Value>, ApiError> {
    let ids = blocking(move || engine.store().list()).await?;
    Ok(Json(serde_json::json!({ "sessions": ids })))
}

async fn create_session(State(engine): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let request: CreateSessionRequest = parse_body(&body)?;
    let view = blocking(move || {
        let session = engine.create_session(request.config, request.id.as_deref())?;
        Ok(session_view(&engine, session))
    })
    .await?;
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn get_session(State(engine): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let view = blocking(move || {
        let session = engine.get_session(&id)?;
        Ok(session_view(&engine, session))
    })
    .await?;
    Ok(Json(view))
}

async fn take_turn(State(engine): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let request: TurnRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError(SessionError::InvalidRequest(format!("request body: {e}"))))?;
    let view = blocking(move || {
        let turn = engine.take_turn(&id, &request.message, TurnOptions { seed: request.seed })?;
        Ok(turn_view(&engine, &id, turn))
    })
    .await?;
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn turn_audio(State(engine): State<AppState>, Path((id, k)): Path<(String, usize)>) -> Result<Response, ApiError> {
    let bytes = blocking(move || engine.store().read_turn_audio_bytes(&id, k)).await?;
    Ok(([(header::CONTENT_TYPE, "audio/wav")], bytes).into_response())
}

async fn turn_plan(State(engine): State<AppState>, Path((id, k)): Path<(String, usize)>) -> Result<Json<Plan>, ApiError> {
    let plan = blocking(move || {
        engine.store().load_settings(&id)?;
        engine
            .store()
            .load_turn(&id, k)?
            .plan
            .ok_or_else(|| SessionError::NotFound(format!("turn {k} of session `{id}` has no plan")))
    })
    .await?;
    Ok(Json(plan))
}

/// The API routes, with permissive CORS and, when given, static files
/// served from `static_dir` for every other path.
pub fn router(engine: Arc<Engine>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", get(list_sessions).post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/turns", axum::routing::post(take_turn))
        .route("/sessions/{id}/turns/{k}/audio", get(turn_audio))
        .route("/sessions/{id}/turns/{k}/plan", get(turn_plan))
        .with_state(engine);
    let api = match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(|| async {
            ApiError(SessionError::NotFound("no such route".into())).into_response()
        }),
    };
    api.layer(CorsLayer::permissive())
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve(
    listener: tokio::net::TcpListener,
    router: Router,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router).with_graceful_shutdown(shutdown).await
}

/// Resolves on ctrl-c or, on Unix, SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    log::info!("shutdown signal received");
}
