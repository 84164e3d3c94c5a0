//! JSON-over-HTTP datalake protocol.
//!
//! `POST /query/jobs` takes a [`JobSelector`] and answers with [`JobColumns`];
//! `POST /query/readings` takes a [`ReadingQuery`] and answers with a
//! [`ReadingBatch`]. Errors come back as `{"error": kind, "message": text}`.

use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{Datalake, DatalakeError, JobRecord, JobSelector, ReadingBatch, ReadingQuery};

/// Column-oriented job listing.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct JobColumns {
    pub job_id: Vec<String>,
    pub start_time: Vec<DateTime<Utc>>,
    pub end_time: Vec<DateTime<Utc>>,
    pub nodes: Vec<Vec<String>>,
}

impl From<Vec<JobRecord>> for JobColumns {
    fn from(jobs: Vec<JobRecord>) -> Self {
        let mut c = JobColumns::default();
        for j in jobs {
            c.job_id.push(j.job_id);
            c.start_time.push(j.start_time);
            c.end_time.push(j.end_time);
            c.nodes.push(j.nodes);
        }
        c
    }
}

impl JobColumns {
    fn into_records(self) -> Result<Vec<JobRecord>, DatalakeError> {
        let n = self.job_id.len();
        if self.start_time.len() != n || self.end_time.len() != n || self.nodes.len() != n {
            return Err(DatalakeError::MalformedStore("job columns have different lengths".into()));
        }
        Ok(self
            .job_id
            .into_iter()
            .zip(self.start_time)
            .zip(self.end_time)
            .zip(self.nodes)
            .map(|(((job_id, start_time), end_time), nodes)| JobRecord { job_id, start_time, end_time, nodes })
            .collect())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ErrorBody {
    error: String,
    message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    plugin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    metric: Option<String>,
}

pub struct RemoteDatalake {
    base: String,
    subset: String,
    client: reqwest::Client,
}

impl RemoteDatalake {
    pub fn new(endpoint: &str, subset: &str) -> Result<Self, DatalakeError> {
        Self::with_timeout(endpoint, subset, Duration::from_secs(30))
    }

    pub fn with_timeout(endpoint: &str, subset: &str, timeout: Duration) -> Result<Self, DatalakeError> {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| DatalakeError::InvalidConfig(e.to_string()))?;
        Ok(Self { base: endpoint.trim_end_matches('/').to_owned(), subset: subset.to_owned(), client })
    }

    pub fn subset(&self) -> &str {
        &self.subset
    }

    async fn post<B: Serialize, R: for<'de> Deserialize<'de>>(&self, path: &str, body: &B) -> Result<R, DatalakeError> {
        let url = format!("{}{path}", self.base);
        let resp = self
            .client
            .post(&url)
            .json(body)
            .send()
            .await
            .map_err(|e| DatalakeError::Unavailable(format!("{url}: {e}")))?;
        let status = resp.status();
        if status.is_success() {
            return resp.json().await.map_err(|e| DatalakeError::MalformedStore(format!("{url}: {e}")));
        }
        let text = resp.text().await.unwrap_or_default();
        let Ok(body) = serde_json::from_str::<ErrorBody>(&text) else {
            return Err(DatalakeError::Unavailable(format!("{url}: HTTP {status}: {text}")));
        };
        Err(match body.error.as_str() {
            "unknown_metric" => DatalakeError::UnknownMetric {
                plugin: body.plugin.unwrap_or_default(),
                metric: body.metric.unwrap_or_default(),
            },
            "invalid_window" | "malformed_store" => DatalakeError::MalformedStore(body.message),
            _ => DatalakeError::Unavailable(body.message),
        })
    }
}

#[async_trait]
impl Datalake for RemoteDatalake {
    async fn fetch_jobs(&self, selector: &JobSelector) -> Result<Vec<JobRecord>, DatalakeError> {
        if let JobSelector::Window { start, end } = selector {
            super::TimeWindow::new(*start, *end)?;
        }
        let cols: JobColumns = self.post("/query/jobs", selector).await?;
        cols.into_records()
    }

    async fn fetch_readings(&self, query: &ReadingQuery) -> Result<ReadingBatch, DatalakeError> {
        query.window()?;
        self.post("/query/readings", query).await
    }

    async fn ping(&self) -> Result<(), DatalakeError> {
        let url = format!("{}/health", self.base);
        let resp = self.client.get(&url).send().await.map_err(|e| DatalakeError::Unavailable(format!("{url}: {e}")))?;
        if resp.status().is_success() {
            Ok(())
        } else {
            Err(DatalakeError::Unavailable(format!("{url}: HTTP {}", resp.status())))
        }
    }
}

struct ApiError(DatalakeError);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind, plugin, metric) = match &self.0 {
            DatalakeError::UnknownMetric { plugin, metric } => {
                (StatusCode::NOT_FOUND, "unknown_metric", Some(plugin.clone()), Some(metric.clone()))
            }
            DatalakeError::InvalidWindow { .. } | DatalakeError::InvalidConfig(_) => {
                (StatusCode::BAD_REQUEST, "invalid_window", None, None)
            }
            DatalakeError::MalformedStore(_) => (StatusCode::INTERNAL_SERVER_ERROR, "malformed_store", None, None),
            DatalakeError::Unavailable(_) => (StatusCode::SERVICE_UNAVAILABLE, "unavailable", None, None),
        };
        let body = ErrorBody { error: kind.into(), message: self.0.to_string(), plugin, metric };
        (status, Json(body)).into_response()
    }
}

async fn jobs_route(
    State(lake): State<Arc<dyn Datalake>>,
    Json(sel): Json<JobSelector>,
) -> Result<Json<JobColumns>, ApiError> {
    lake.fetch_jobs(&sel).await.map(|j| Json(j.into())).map_err(ApiError)
}

async fn readings_route(
    State(lake): State<Arc<dyn Datalake>>,
    Json(q): Json<ReadingQuery>,
) -> Result<Json<ReadingBatch>, ApiError> {
    lake.fetch_readings(&q).await.map(Json).map_err(ApiError)
}

/// Serves any datalake over the remote protocol.
pub fn router(lake: Arc<dyn Datalake>) -> Router {
    Router::new()
        .route("/query/jobs", post(jobs_route))
        .route("/query/readings", post(readings_route))
        .route("/health", get(|| async { "ok" }))
        .with_state(lake)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn job_columns_roundtrip() {
        let t = DateTime::parse_from_rfc3339("2022-02-01T00:00:00Z").unwrap().with_timezone(&Utc);
        let jobs = vec![JobRecord { job_id: "7".into(), start_time: t, end_time: t, nodes: vec!["n".into()] }];
        let cols = JobColumns::from(jobs.clone());
        let json = serde_json::to_string(&cols).unwrap();
        let back: JobColumns = serde_json::from_str(&json).unwrap();
        assert_eq!(back.into_records().unwrap(), jobs);
    }

    #[test]
    fn ragged_columns_rejected() {
        let cols = JobColumns { job_id: vec!["1".into()], ..Default::default() };
        assert!(cols.into_records().is_err());
    }
}
