use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use super::{Backend, ChatError, ChatRequest};
use crate::datalake::DatalakeConfig;
use crate::query_pipeline::QueryError;
use crate::sparql::SparqlError;
use crate::store::StoreError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

impl ChatError {
    pub fn status(&self) -> StatusCode {
        match self {
            ChatError::InvalidRequest(_) => StatusCode::BAD_REQUEST,
            ChatError::NoDatasetSelected => StatusCode::CONFLICT,
            ChatError::Rejected(_) | ChatError::Query(QueryError::RefusedUnresolved(_) | QueryError::Unrefinable) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            ChatError::ResultExpired(_) => StatusCode::NOT_FOUND,
            ChatError::DatalakeUnavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
            ChatError::Store(StoreError::Timeout(_)) | ChatError::Generation(SparqlError::LlmTimeout(_)) => {
                StatusCode::GATEWAY_TIMEOUT
            }
            ChatError::Store(_) | ChatError::Generation(_) | ChatError::Query(QueryError::Store(_)) => StatusCode::BAD_GATEWAY,
            ChatError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ChatError {
    fn into_response(self) -> Response {
        let body = ErrorBody { error: self.kind().into(), message: self.to_string() };
        (self.status(), Json(body)).into_response()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetList {
    pub subsets: Vec<String>,
    pub selected: Option<DatalakeConfig>,
}

/// Malformed bodies are a 400, keeping 422 for questions the pipeline refuses.
fn body<T>(r: Result<Json<T>, JsonRejection>) -> Result<T, ChatError> {
    r.map(|Json(v)| v).map_err(|e| ChatError::InvalidRequest(e.body_text()))
}

async fn dataset(
    State(b): State<Arc<Backend>>,
    ds: Result<Json<DatalakeConfig>, JsonRejection>,
) -> Result<impl IntoResponse, ChatError> {
    Ok(Json(b.select_dataset(body(ds)?).await?))
}

async fn datasets(State(b): State<Arc<Backend>>) -> Json<DatasetList> {
    Json(DatasetList { subsets: b.local_datasets(), selected: b.selected_dataset() })
}

async fn chat(
    State(b): State<Arc<Backend>>,
    req: Result<Json<ChatRequest>, JsonRejection>,
) -> Result<impl IntoResponse, ChatError> {
    Ok(Json(b.chat(body(req)?).await?))
}

async fn result_csv(State(b): State<Arc<Backend>>, Path(file): Path<String>) -> Result<impl IntoResponse, ChatError> {
    let id = file.strip_suffix(".csv").ok_or_else(|| ChatError::ResultExpired(file.clone()))?;
    let body = b.export_csv(id)?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], body))
}

async fn health(State(b): State<Arc<Backend>>) -> impl IntoResponse {
    Json(b.health().await)
}

pub fn router(backend: Arc<Backend>) -> Router {
    Router::new()
        .route("/api/dataset", post(dataset))
        .route("/api/datasets", get(datasets))
        .route("/api/chat", post(chat))
        .route("/api/result/{file}", get(result_csv))
        .route("/api/health", get(health))
        .with_state(backend)
}

pub async fn serve(backend: Arc<Backend>, bind: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(backend)).await
}
