//! `/api/v1` routes.
//!
//! | method | path                      | body / query          | response                |
//! |--------|---------------------------|-----------------------|-------------------------|
//! | GET    | `/api/v1/latest`          |                       | [`ApiSnapshot`]         |
//! | GET    | `/api/v1/history`         | `?from=&to=` (ms)     | `[StoredRecord]`        |
//! | GET    | `/api/v1/condition`       |                       | [`ConditionView`]       |
//! | GET    | `/api/v1/actuators`       |                       | `[ActuatorView]`        |
//! | POST   | `/api/v1/actuators/{id}`  | `{"mode":"on"}`       | [`ActuatorView`]        |
//! | POST   | `/api/v1/ingest`          | one ingest frame      | [`IngestReply`]         |
//! | GET    | `/api/v1/stream`          |                       | SSE: sample/tick/condition |
//!
//! Errors are `{"error": <code>, "detail": <text>}` with codes `no_data`
//! (503), `bad_request` (400), `not_found` (404), `internal` (500).
//!
//! [`ApiSnapshot`]: crate::ApiSnapshot
//! [`ConditionView`]: crate::ConditionView
//! [`ActuatorView`]: crate::ActuatorView

use std::convert::Infallible;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use floc_core::{ActuatorId, ActuatorMode, StoreError, TimestampMs};
use futures::stream::{self, Stream, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast::error::RecvError;

use crate::ingest::{IngestReply, RejectReason};
use crate::state::{ActuatorView, Gateway};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub error: String,
    pub detail: String,
    #[serde(skip)]
    status: u16,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, detail: impl Into<String>) -> Self {
        ApiError { error: code.into(), detail: detail.into(), status: status.as_u16() }
    }

    fn bad_request(detail: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", detail)
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NoData => ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no_data", "no telemetry yet"),
            e @ StoreError::InvalidRange { .. } => ApiError::bad_request(e.to_string()),
            e => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(gateway: Gateway) -> Router {
    Router::new()
        .route("/api/v1/latest", get(latest))
        .route("/api/v1/history", get(history))
        .route("/api/v1/condition", get(condition))
        .route("/api/v1/actuators", get(actuators))
        .route("/api/v1/actuators/{id}", post(set_actuator))
        .route("/api/v1/ingest", post(ingest))
        .route("/api/v1/stream", get(stream))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route") })
        .with_state(gateway)
}

async fn latest(State(gw): State<Gateway>) -> ApiResult<crate::ApiSnapshot> {
    Ok(Json(gw.snapshot()?))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct HistoryQuery {
    from: Option<TimestampMs>,
    to: Option<TimestampMs>,
}

async fn history(
    State(gw): State<Gateway>,
    query: Result<Query<HistoryQuery>, QueryRejection>,
) -> ApiResult<Vec<floc_core::StoredRecord>> {
    let Query(q) = query.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let records = gw.store().range(q.from.unwrap_or(TimestampMs::MIN), q.to.unwrap_or(TimestampMs::MAX))?;
    Ok(Json(records))
}

async fn condition(State(gw): State<Gateway>) -> ApiResult<crate::ConditionView> {
    Ok(Json(gw.condition()?))
}

async fn actuators(State(gw): State<Gateway>) -> Json<Vec<ActuatorView>> {
    Json(gw.actuators().iter().map(ActuatorView::from).collect())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModeBody {
    mode: String,
}

async fn set_actuator(
    State(gw): State<Gateway>,
    Path(id): Path<String>,
    body: Result<Json<ModeBody>, JsonRejection>,
) -> ApiResult<ActuatorView> {
    let id: ActuatorId = id.parse().map_err(|e: String| ApiError::new(StatusCode::NOT_FOUND, "not_found", e))?;
    let Json(body) = body.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let mode: ActuatorMode = body.mode.parse().map_err(ApiError::bad_request)?;
    let state = gw.set_mode(id, mode).await;
    Ok(Json(ActuatorView::from(&state)))
}

async fn ingest(State(gw): State<Gateway>, body: Bytes) -> (StatusCode, Json<IngestReply>) {
    let reply = gw.ingest_line(&body);
    let status = match &reply {
        IngestReply::Ack { .. } => StatusCode::OK,
        IngestReply::Reject { reason: RejectReason::OutOfOrder, .. } => StatusCode::CONFLICT,
        IngestReply::Reject { reason: RejectReason::IoError, .. } => StatusCode::INTERNAL_SERVER_ERROR,
        IngestReply::Reject { reason: RejectReason::LineTooLong, .. } => StatusCode::PAYLOAD_TOO_LARGE,
        IngestReply::Reject { .. } => StatusCode::BAD_REQUEST,
    };
    (status, Json(reply))
}

/// Live event stream. A subscriber that falls more than the channel
/// capacity behind gets a final `lagged` event and the stream closes, so a
/// connected client never silently misses a tick; it should reconnect and
/// backfill from `/history`.
async fn stream(State(gw): State<Gateway>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let rx = gw.subscribe();
    let events = stream::unfold(Some(rx), |rx| async move {
        let mut rx = rx?;
        match rx.recv().await {
            Ok(ev) => Some((Event::default().event(ev.name()).data(ev.data()), Some(rx))),
            Err(RecvError::Lagged(missed)) => {
                tracing::warn!(missed, "stream subscriber lagged, closing");
                Some((Event::default().event("lagged").data(format!("{{\"missed\":{missed}}}")), None))
            }
            Err(RecvError::Closed) => None,
        }
    })
    .map(Ok)
    .take_until(gw.shutdown_signal());
    Sse::new(events).keep_alive(KeepAlive::new().interval(Duration::from_secs(15)))
}
