//! HTTP inference service: session-based sequential colorization.
//!
//! Routes:
//!
//! - `POST /api/sessions` `{"mode","width","height"}` -> `{"id"}`
//! - `POST /api/sessions/{id}/colorize` `{"line_art_png_b64","hints":[{"x","y","rgb"}]}`
//!   -> `{"frame_png_b64","frame_index"}`
//! - `POST /api/sessions/{id}/reset` -> `{}`
//! - `GET /api/health` -> `{"model":"loaded","checkpoint"}`
//!
//! Errors are JSON `{"error": message}` with a 4xx or 5xx status.

pub mod session;

use std::future::Future;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use hintcolor::dataset::rasterize_placements;
pub use hintcolor::dataset::HintPlacement;
use hintcolor::image::{decode_png, encode_png, to_greyscale, to_model_range, ImageTensor, InputMode};
use hintcolor::model::Generator;
use hintcolor::training::{load_generator, resolve_checkpoint, CheckpointMeta};
use serde::{Deserialize, Serialize};

pub use session::{Session, SessionRegistry, SessionSlot};

/// Idle time after which a session is discarded.
pub const DEFAULT_TTL: Duration = Duration::from_secs(30 * 60);
/// Side of one hint cell in pixels.
pub const DEFAULT_PATCH_SIZE: usize = 4;

/// Immutable model plus the session table.
pub struct AppState {
    generator: Arc<Generator<f32>>,
    meta: CheckpointMeta,
    checkpoint_name: String,
    patch_size: usize,
    sessions: SessionRegistry,
}

impl AppState {
    pub fn new(generator: Generator<f32>, meta: CheckpointMeta, checkpoint_name: String, ttl: Duration) -> Self {
        Self {
            generator: Arc::new(generator),
            meta,
            checkpoint_name,
            patch_size: DEFAULT_PATCH_SIZE,
            sessions: SessionRegistry::new(ttl),
        }
    }

    /// Loads generator weights from a checkpoint directory or root.
    pub fn load(checkpoint: &Path, ttl: Duration) -> hintcolor::Result<Self> {
        let dir = resolve_checkpoint(checkpoint)?;
        let (generator, meta) = load_generator(&dir)?;
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        Ok(Self::new(generator, meta, name, ttl))
    }

    pub fn with_patch_size(mut self, patch_size: usize) -> Self {
        self.patch_size = patch_size;
        self
    }

    pub fn checkpoint_name(&self) -> &str {
        &self.checkpoint_name
    }

    pub fn meta(&self) -> &CheckpointMeta {
        &self.meta
    }

    pub fn sessions(&self) -> &SessionRegistry {
        &self.sessions
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
        }
    }

    fn not_found(id: &str) -> Self {
        Self {
            status: StatusCode::NOT_FOUND,
            message: format!("unknown or expired session {id}"),
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            message: message.into(),
        }
    }
}

impl From<hintcolor::Error> for ApiError {
    fn from(e: hintcolor::Error) -> Self {
        if e.is_user_error() {
            Self::bad_request(e.to_string())
        } else {
            Self::internal(e.to_string())
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CreateSession {
    #[serde(default)]
    pub mode: InputMode,
    pub width: usize,
    pub height: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ColorizeRequest {
    pub line_art_png_b64: String,
    #[serde(default)]
    pub hints: Vec<HintPlacement>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ColorizeResponse {
    pub frame_png_b64: String,
    /// Zero-based index of the returned frame within the session.
    pub frame_index: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Health {
    pub model: String,
    pub checkpoint: String,
    pub step: u64,
    pub mode: InputMode,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}/colorize", post(colorize))
        .route("/api/sessions/{id}/reset", post(reset_session))
        .with_state(state)
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
/// Also sweeps expired sessions in the background.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let sweeper = {
        let state = state.clone();
        let period = (state.sessions.ttl() / 4).max(Duration::from_secs(1));
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(period);
            loop {
                tick.tick().await;
                let n = state.sessions.sweep();
                if n > 0 {
                    log::info!("expired {n} idle sessions");
                }
            }
        })
    };
    let result = axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await;
    sweeper.abort();
    result
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Health> {
    Json(Health {
        model: "loaded".into(),
        checkpoint: state.checkpoint_name.clone(),
        step: state.meta.step,
        mode: state.meta.mode,
    })
}

async fn create_session(State(state): State<Arc<AppState>>, Json(req): Json<CreateSession>) -> ApiResult<Created> {
    if req.mode != state.meta.mode {
        return Err(ApiError::bad_request(format!(
            "checkpoint expects {} input, session asked for {}",
            state.meta.mode, req.mode
        )));
    }
    if req.width % 4 != 0 || req.height % 4 != 0 {
        return Err(ApiError::bad_request(format!(
            "resolution {}x{} must have sides divisible by 4",
            req.width, req.height
        )));
    }
    let id = state.sessions.create(req.mode, req.height, req.width)?;
    Ok(Json(Created { id }))
}

/// Line art as a one-channel model-range image of the session's size.
fn decode_line_art(b64: &str, session: &Session) -> Result<ImageTensor<f32>, ApiError> {
    let bytes = B64
        .decode(b64.trim())
        .map_err(|e| ApiError::bad_request(format!("line_art_png_b64 is not valid base64: {e}")))?;
    let raw = decode_png(&bytes).map_err(|e| ApiError::bad_request(format!("line art is not a PNG: {e}")))?;
    if (raw.height, raw.width) != (session.height, session.width) {
        return Err(ApiError::bad_request(format!(
            "line art is {}x{} but the session is {}x{}",
            raw.height, raw.width, session.height, session.width
        )));
    }
    let img = to_model_range::<f32>(&raw)?;
    Ok(if img.channels() == 3 { to_greyscale(&img)? } else { img })
}

fn hint_map(hints: &[HintPlacement], session: &Session, patch: usize) -> Result<ImageTensor<f32>, ApiError> {
    Ok(rasterize_placements(session.height, session.width, patch, hints)?)
}

async fn colorize(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<ColorizeRequest>,
) -> ApiResult<ColorizeResponse> {
    let slot = state.sessions.get(&id).ok_or_else(|| ApiError::not_found(&id))?;
    let mut session = slot.state.lock().await;
    let line = decode_line_art(&req.line_art_png_b64, &session)?;
    let hint = hint_map(&req.hints, &session, state.patch_size)?;
    let prev = session.prev_frame.clone();
    let gen = state.generator.clone();
    let frame = tokio::task::spawn_blocking(move || gen.forward(&line, &hint, &prev))
        .await
        .map_err(|e| ApiError::internal(format!("generator task failed: {e}")))?
        .map_err(|e| ApiError::internal(e.to_string()))?;
    let png = encode_png(&frame).map_err(|e| ApiError::internal(e.to_string()))?;
    let frame_index = session.frame_index;
    session.prev_frame = frame;
    session.frame_index += 1;
    Ok(Json(ColorizeResponse {
        frame_png_b64: B64.encode(png),
        frame_index,
    }))
}

async fn reset_session(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<serde_json::Value> {
    let slot = state.sessions.get(&id).ok_or_else(|| ApiError::not_found(&id))?;
    slot.state.lock().await.reset()?;
    Ok(Json(serde_json::json!({})))
}
