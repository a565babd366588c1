use std::collections::VecDeque;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

use super::manager::{FrameOutput, SessionManager, TrainRequest};
use super::messages::{decode_frame_b64, encode_mask_b64, error_code, ClientMessage, ServerMessage, PROTOCOL_VERSION, SCHEMA_JSON};
use super::session::Mode;
use crate::error::{Error, Result};

type Shared = Arc<SessionManager>;

pub struct ApiError(pub Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::Conflict(_) | Error::State(_) => StatusCode::CONFLICT,
            Error::Protocol(_) => StatusCode::BAD_REQUEST,
            Error::Dataset(_) | Error::Validation { .. } | Error::Argument(_) | Error::Config(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let body = serde_json::json!({"error": {"code": error_code(&self.0), "message": self.0.to_string()}});
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> Result<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| Error::State(format!("worker task failed: {e}")))?
}

/// Parses a JSON body; an empty body gives `None`.
fn body<T: DeserializeOwned>(bytes: &Bytes) -> Result<Option<T>> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(None);
    }
    serde_json::from_slice(bytes)
        .map(Some)
        .map_err(|e| Error::Protocol(format!("request body: {e}")))
}

fn required<T: DeserializeOwned>(bytes: &Bytes) -> Result<T> {
    body(bytes)?.ok_or_else(|| Error::Protocol("request body is required".into()))
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct CreateBody {
    lambda_blend: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassBody {
    label: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ActiveBody {
    class_id: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModeBody {
    mode: Mode,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LambdaBody {
    lambda_blend: f64,
}

async fn create_session(State(m): State<Shared>, raw: Bytes) -> ApiResult<impl IntoResponse> {
    let b: CreateBody = body(&raw)?.unwrap_or_default();
    let view = blocking(move || m.create_session(b.lambda_blend)).await?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_session(State(m): State<Shared>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || m.view(&id)).await?))
}

async fn add_class(State(m): State<Shared>, Path(id): Path<String>, raw: Bytes) -> ApiResult<impl IntoResponse> {
    let b: ClassBody = required(&raw)?;
    let class = blocking(move || m.add_class(&id, &b.label)).await?;
    Ok((StatusCode::CREATED, Json(class)))
}

async fn set_active_class(State(m): State<Shared>, Path(id): Path<String>, raw: Bytes) -> ApiResult<impl IntoResponse> {
    let b: ActiveBody = required(&raw)?;
    Ok(Json(blocking(move || m.set_active_class(&id, b.class_id)).await?))
}

async fn set_mode(State(m): State<Shared>, Path(id): Path<String>, raw: Bytes) -> ApiResult<impl IntoResponse> {
    let b: ModeBody = required(&raw)?;
    Ok(Json(blocking(move || m.set_mode(&id, b.mode)).await?))
}

async fn set_lambda(State(m): State<Shared>, Path(id): Path<String>, raw: Bytes) -> ApiResult<impl IntoResponse> {
    let b: LambdaBody = required(&raw)?;
    Ok(Json(blocking(move || m.set_lambda_blend(&id, b.lambda_blend)).await?))
}

async fn start_training(State(m): State<Shared>, Path(id): Path<String>, raw: Bytes) -> ApiResult<impl IntoResponse> {
    let req: TrainRequest = body(&raw)?.unwrap_or_default();
    let job = blocking(move || m.start_training(&id, &req)).await?;
    Ok((StatusCode::ACCEPTED, Json(job)))
}

async fn job_status(State(m): State<Shared>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(m.job_status(&id)?))
}

async fn schema() -> impl IntoResponse {
    ([(header::CONTENT_TYPE, "application/schema+json")], SCHEMA_JSON)
}

async fn stream(State(m): State<Shared>, Path(id): Path<String>, ws: WebSocketUpgrade) -> ApiResult<Response> {
    m.view(&id)?;
    Ok(ws.on_upgrade(move |socket| stream_loop(socket, m, id)))
}

fn frame_reply(m: &SessionManager, id: &str, frame_id: Option<String>, out: FrameOutput) -> Result<ServerMessage> {
    let dropped = m.dropped(id)?;
    Ok(match out {
        FrameOutput::Highlight { mask, latency_ms } => ServerMessage::Highlight {
            v: PROTOCOL_VERSION,
            frame_id,
            width: mask.width(),
            height: mask.height(),
            mask: encode_mask_b64(&mask)?,
            latency_ms,
            dropped,
        },
        FrameOutput::Prediction {
            result,
            label,
            saliency_class,
            latency_ms,
        } => ServerMessage::Prediction {
            v: PROTOCOL_VERSION,
            frame_id,
            width: result.saliency.width(),
            height: result.saliency.height(),
            saliency: encode_mask_b64(&result.saliency)?,
            confidences: result.confidences,
            predicted_class: result.predicted_class,
            predicted_label: label,
            saliency_class,
            latency_ms,
            dropped,
        },
    })
}

/// Runs one client message to completion. `None` means the frame was fenced
/// by a mode switch and produced nothing.
fn handle(m: &SessionManager, id: &str, msg: ClientMessage, seq: u64) -> Option<ServerMessage> {
    let frame_id = msg.frame_id().map(str::to_string);
    let source_id = frame_id.clone().unwrap_or_else(|| format!("{id}-{seq}"));
    let result = match msg {
        ClientMessage::Frame {
            frame, saliency_class, ..
        } => decode_frame_b64(&frame, source_id).and_then(|f| match m.process_frame(id, &f, saliency_class)? {
            Some(out) => frame_reply(m, id, frame_id.clone(), out).map(Some),
            None => {
                m.record_drop(id)?;
                Ok(None)
            }
        }),
        ClientMessage::Capture { frame, .. } => decode_frame_b64(&frame, source_id).and_then(|f| {
            let c = m.capture_sample(id, &f)?;
            Ok(Some(ServerMessage::Captured {
                v: PROTOCOL_VERSION,
                frame_id: frame_id.clone(),
                sample_id: c.sample.sample_id().to_string(),
                class_id: c.sample.class_id(),
                sample_count: c.sample_count,
            }))
        }),
    };
    result.unwrap_or_else(|e| Some(ServerMessage::error(&e, frame_id)))
}

/// Per-connection loop. At most one message is processed at a time; a newer
/// frame replaces a waiting one (counted as dropped), captures queue in order
/// and go before frames.
async fn stream_loop(mut socket: WebSocket, m: Shared, id: String) {
    let mut waiting: Option<ClientMessage> = None;
    let mut captures: VecDeque<ClientMessage> = VecDeque::new();
    let mut inflight: Option<JoinHandle<Option<ServerMessage>>> = None;
    let mut seq = 0u64;
    loop {
        if inflight.is_none() {
            if let Some(next) = captures.pop_front().or_else(|| waiting.take()) {
                let (m, id) = (m.clone(), id.clone());
                seq += 1;
                let n = seq;
                inflight = Some(tokio::task::spawn_blocking(move || handle(&m, &id, next, n)));
            }
        }
        let reply = tokio::select! {
            incoming = socket.recv() => match incoming {
                None | Some(Err(_)) | Some(Ok(Message::Close(_))) => break,
                Some(Ok(Message::Text(text))) => match ClientMessage::parse(text.as_str()) {
                    Ok(msg @ ClientMessage::Capture { .. }) => {
                        captures.push_back(msg);
                        None
                    }
                    Ok(msg) => {
                        if waiting.replace(msg).is_some() {
                            let _ = m.record_drop(&id);
                        }
                        None
                    }
                    Err(e) => Some(ServerMessage::error(&e, None)),
                },
                Some(Ok(Message::Binary(_))) => Some(ServerMessage::error(
                    &Error::Protocol("binary messages are not supported".into()),
                    None,
                )),
                Some(Ok(_)) => None,
            },
            done = async { inflight.as_mut().expect("guarded").await }, if inflight.is_some() => {
                inflight = None;
                match done {
                    Ok(reply) => reply,
                    Err(e) => Some(ServerMessage::error(&Error::State(format!("worker task failed: {e}")), None)),
                }
            }
        };
        if let Some(reply) = reply {
            if socket.send(Message::Text(reply.to_json().into())).await.is_err() {
                break;
            }
        }
    }
    if let Some(task) = inflight {
        let _ = task.await;
    }
}

pub fn router(manager: Shared) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/classes", post(add_class))
        .route("/sessions/{id}/active_class", post(set_active_class))
        .route("/sessions/{id}/mode", post(set_mode))
        .route("/sessions/{id}/lambda", post(set_lambda))
        .route("/sessions/{id}/stream", get(stream))
        .route("/sessions/{id}/train", post(start_training))
        .route("/jobs/{id}", get(job_status))
        .route("/schema/messages.v1.json", get(schema))
        .with_state(manager)
}

/// Serves until the listener fails.
pub async fn serve(manager: Shared, listener: TcpListener) -> std::io::Result<()> {
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(manager)).await
}
