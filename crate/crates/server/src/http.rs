//! JSON view of the frame protocol. Ciphertexts travel as base64 of their
//! binary serialization; `/v1/frame` accepts raw frames.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::json;
use vfhe_core::backend::{BackendId, CipherMatrix, PlainMatrix};
use vfhe_core::checksum::predict_overheads;
use vfhe_core::params::PlainParams;
use vfhe_core::protocol::{ErrorCode, Message, OperandBlob, OperandRef, SessionStore};

pub struct ApiError {
    status: StatusCode,
    code: u16,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            code: ErrorCode::PROTOCOL.0,
            message: message.into(),
        }
    }

    fn from_reply(code: ErrorCode, message: String) -> Self {
        let status = match code {
            ErrorCode::UNKNOWN_SESSION | ErrorCode::UNKNOWN_HANDLE => StatusCode::NOT_FOUND,
            ErrorCode::OVERSIZE => StatusCode::PAYLOAD_TOO_LARGE,
            ErrorCode::DIMENSION | ErrorCode::BACKEND => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError {
            status,
            code: code.0,
            message,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "code": self.code, "message": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

async fn dispatch(store: &Arc<SessionStore>, msg: Message) -> Result<Message, ApiError> {
    let store = store.clone();
    let reply = tokio::task::spawn_blocking(move || store.handle(msg))
        .await
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    match reply {
        Message::Error { code, message } => Err(ApiError::from_reply(code, message)),
        other => Ok(other),
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionRequest {
    pub backend: String,
    #[serde(flatten)]
    pub params: PlainParams,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionResponse {
    pub session: u64,
    pub backend: String,
    #[serde(flatten)]
    pub params: PlainParams,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct OperandRequest {
    pub handle: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ciphertext: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plain: Option<PlainMatrix>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ComputeRequest {
    pub lhs: u32,
    pub rhs: OperandRef,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ComputeResponse {
    pub session: u64,
    pub rows: usize,
    pub cols: usize,
    pub ciphertext: String,
}

#[derive(Debug, Deserialize)]
struct Dims {
    m: u64,
    n: u64,
    k: u64,
}

async fn healthz(State(store): State<Arc<SessionStore>>) -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "sessions": store.session_count() }))
}

async fn backends() -> Json<serde_json::Value> {
    Json(json!([
        { "id": BackendId::EXACT.0, "name": BackendId::EXACT.name(), "exact": true },
        { "id": BackendId::APPROXIMATE.0, "name": BackendId::APPROXIMATE.name(), "exact": false },
    ]))
}

async fn create_session(
    State(store): State<Arc<SessionStore>>,
    Json(req): Json<SessionRequest>,
) -> Result<(StatusCode, Json<SessionResponse>), ApiError> {
    let backend: BackendId = req.backend.parse().map_err(|e: vfhe_core::Error| ApiError::bad_request(e.to_string()))?;
    match dispatch(&store, Message::SessionInit { backend, params: req.params }).await? {
        Message::InitAck { session, backend, params } => Ok((
            StatusCode::CREATED,
            Json(SessionResponse {
                session,
                backend: backend.name().to_string(),
                params,
            }),
        )),
        other => Err(ApiError::bad_request(format!("unexpected reply {:?}", other.msg_type()))),
    }
}

async fn close_session(State(store): State<Arc<SessionStore>>, Path(id): Path<u64>) -> StatusCode {
    if store.close(id) {
        StatusCode::NO_CONTENT
    } else {
        StatusCode::NOT_FOUND
    }
}

async fn counters(State(store): State<Arc<SessionStore>>, Path(id): Path<u64>) -> Result<Json<serde_json::Value>, ApiError> {
    store
        .counters(id)
        .map(|c| Json(json!(c)))
        .ok_or_else(|| ApiError::from_reply(ErrorCode::UNKNOWN_SESSION, format!("no session {id}")))
}

async fn upload(
    State(store): State<Arc<SessionStore>>,
    Path(session): Path<u64>,
    Json(req): Json<OperandRequest>,
) -> ApiResult<serde_json::Value> {
    let operand = match (req.ciphertext, req.plain) {
        (Some(b64), None) => {
            let bytes = B64.decode(b64).map_err(|e| ApiError::bad_request(format!("ciphertext: {e}")))?;
            OperandBlob::Cipher(CipherMatrix::from_bytes(&bytes).map_err(|e| ApiError::bad_request(e.to_string()))?)
        }
        (None, Some(p)) => OperandBlob::Plain(p),
        _ => return Err(ApiError::bad_request("exactly one of `ciphertext` and `plain` is required")),
    };
    let handle = req.handle;
    dispatch(&store, Message::UploadOperand { session, handle, operand }).await?;
    Ok(Json(json!({ "session": session, "handle": handle })))
}

async fn compute(
    State(store): State<Arc<SessionStore>>,
    Path(session): Path<u64>,
    Json(req): Json<ComputeRequest>,
) -> ApiResult<ComputeResponse> {
    match dispatch(&store, Message::ComputeRequest { session, lhs: req.lhs, rhs: req.rhs }).await? {
        Message::Result { session, ciphertext } => Ok(Json(ComputeResponse {
            session,
            rows: ciphertext.rows,
            cols: ciphertext.cols,
            ciphertext: B64.encode(ciphertext.to_bytes()),
        })),
        other => Err(ApiError::bad_request(format!("unexpected reply {:?}", other.msg_type()))),
    }
}

async fn frame(State(store): State<Arc<SessionStore>>, body: Bytes) -> Response {
    let reply = tokio::task::spawn_blocking(move || store.handle_bytes(&body)).await;
    match reply {
        Ok(bytes) => ([(header::CONTENT_TYPE, "application/octet-stream")], bytes).into_response(),
        Err(e) => ApiError::bad_request(e.to_string()).into_response(),
    }
}

async fn overheads(Query(d): Query<Dims>) -> ApiResult<vfhe_core::checksum::OverheadModel> {
    predict_overheads(d.m, d.n, d.k)
        .map(Json)
        .map_err(|e| ApiError::bad_request(e.to_string()))
}

pub fn router(store: Arc<SessionStore>) -> Router {
    let body_limit = store.config().max_payload.saturating_mul(2).max(1 << 20);
    Router::new()
        .route("/healthz", get(healthz))
        .route("/v1/backends", get(backends))
        .route("/v1/overheads", get(overheads))
        .route("/v1/frame", post(frame))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", delete(close_session))
        .route("/v1/sessions/{id}/counters", get(counters))
        .route("/v1/sessions/{id}/operands", post(upload))
        .route("/v1/sessions/{id}/compute", post(compute))
        .layer(axum::extract::DefaultBodyLimit::max(body_limit))
        .with_state(store)
}
