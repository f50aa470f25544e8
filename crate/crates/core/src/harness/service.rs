//! HTTP API for the rating UI.
//!
//! * `GET /api/tasks/next?rater=ID`
//! * `POST /api/ratings`
//! * `GET /api/progress`
//! * `GET /api/report`

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use super::rating::{AggregateReport, RatingError, RatingRecord, RatingStore, RatingValue, SubmitAck, TaskView};

pub type SharedStore = Arc<RwLock<RatingStore>>;

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NextTask {
    pub task: Option<TaskView>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Report {
    pub systems: BTreeMap<String, AggregateReport>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Skip {
    Skip,
}

/// `value` is a rating or the string `"skip"`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SubmittedValue {
    Rating(RatingValue),
    Skip(Skip),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Submission {
    pub task_id: String,
    pub rater: String,
    pub value: SubmittedValue,
}

#[derive(Debug, Deserialize)]
struct RaterQuery {
    rater: Option<String>,
}

struct ApiError(StatusCode, String);

impl From<RatingError> for ApiError {
    fn from(e: RatingError) -> Self {
        let status = match e {
            RatingError::UnknownTask(_) => StatusCode::NOT_FOUND,
            RatingError::Duplicate { .. } => StatusCode::CONFLICT,
            RatingError::Domain(_) => StatusCode::UNPROCESSABLE_ENTITY,
            RatingError::Ledger { .. } | RatingError::Io(_) | RatingError::Json(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(ErrorBody { error: self.1 })).into_response()
    }
}

fn write(store: &SharedStore) -> std::sync::RwLockWriteGuard<'_, RatingStore> {
    store.write().unwrap_or_else(|p| p.into_inner())
}

fn read(store: &SharedStore) -> std::sync::RwLockReadGuard<'_, RatingStore> {
    store.read().unwrap_or_else(|p| p.into_inner())
}

async fn next_task(State(store): State<SharedStore>, Query(q): Query<RaterQuery>) -> Result<Json<NextTask>, ApiError> {
    let rater = q
        .rater
        .ok_or_else(|| ApiError(StatusCode::UNPROCESSABLE_ENTITY, "missing `rater` parameter".into()))?;
    let task = write(&store).next_task(&rater)?;
    Ok(Json(NextTask { task }))
}

async fn submit(
    State(store): State<SharedStore>,
    body: Result<Json<Submission>, JsonRejection>,
) -> Result<Json<SubmitAck>, ApiError> {
    let Json(sub) = body.map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.body_text()))?;
    let mut store = write(&store);
    let ack = match sub.value {
        SubmittedValue::Rating(value) => store.submit_rating(RatingRecord {
            task_id: sub.task_id,
            rater: sub.rater,
            value,
        })?,
        SubmittedValue::Skip(_) => {
            store.skip_task(&sub.task_id, &sub.rater)?;
            store.ack(&sub.task_id)?
        }
    };
    Ok(Json(ack))
}

async fn progress(State(store): State<SharedStore>) -> impl IntoResponse {
    Json(read(&store).progress())
}

async fn report(State(store): State<SharedStore>) -> impl IntoResponse {
    Json(Report {
        systems: read(&store).report(),
    })
}

pub fn router(store: SharedStore) -> Router {
    Router::new()
        .route("/api/tasks/next", get(next_task))
        .route("/api/ratings", post(submit))
        .route("/api/progress", get(progress))
        .route("/api/report", get(report))
        .with_state(store)
}

/// Serve until the process is stopped.
pub async fn serve(store: RatingStore, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(Arc::new(RwLock::new(store)))).await
}
