//! Telemetry access: jobs and sensor readings.
//!
//! Two backends share the [`Datalake`] trait: a directory of parquet column
//! files and a JSON-over-HTTP remote that stands in for a production NoSQL
//! store. Windows are half-open `[start, end)`; job selection by window is by
//! overlap.

mod columnar;
pub mod registry;
pub mod remote;
pub mod synth;

use std::path::PathBuf;
use std::sync::Arc;

use async_trait::async_trait;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use columnar::ColumnarFiles;
pub use remote::RemoteDatalake;

#[derive(Debug, thiserror::Error)]
pub enum DatalakeError {
    #[error("datalake unavailable: {0}")]
    Unavailable(String),
    #[error("malformed store: {0}")]
    MalformedStore(String),
    #[error("unknown metric {plugin}/{metric}")]
    UnknownMetric { plugin: String, metric: String },
    #[error("invalid window: start {start} is after end {end}")]
    InvalidWindow { start: DateTime<Utc>, end: DateTime<Utc> },
    #[error("invalid datalake config: {0}")]
    InvalidConfig(String),
}

/// Half-open time window `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeWindow {
    start: DateTime<Utc>,
    end: DateTime<Utc>,
}

impl TimeWindow {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>) -> Result<Self, DatalakeError> {
        if start > end {
            return Err(DatalakeError::InvalidWindow { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    pub fn end(&self) -> DateTime<Utc> {
        self.end
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        self.start <= t && t < self.end
    }

    /// Overlap with a job's `[start, end)` activity interval. Zero-length jobs
    /// count as the instant `start`.
    pub fn overlaps(&self, start: DateTime<Utc>, end: DateTime<Utc>) -> bool {
        if self.is_empty() {
            return false;
        }
        if start == end {
            return self.contains(start);
        }
        start < self.end && end > self.start
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JobRecord {
    pub job_id: String,
    pub start_time: DateTime<Utc>,
    pub end_time: DateTime<Utc>,
    pub nodes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum JobSelector {
    Id { job_id: String },
    Window { start: DateTime<Utc>, end: DateTime<Utc> },
}

impl JobSelector {
    pub fn id(id: impl Into<String>) -> Self {
        JobSelector::Id { job_id: id.into() }
    }

    pub fn window(w: TimeWindow) -> Self {
        JobSelector::Window { start: w.start, end: w.end }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadingQuery {
    pub metric: String,
    pub plugin: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<String>,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl ReadingQuery {
    pub fn window(&self) -> Result<TimeWindow, DatalakeError> {
        TimeWindow::new(self.start, self.end)
    }
}

/// Column-oriented readings, sorted by (node, timestamp).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReadingBatch {
    pub plugin: String,
    pub metric: String,
    pub unit: String,
    pub timestamp: Vec<DateTime<Utc>>,
    pub node: Vec<String>,
    pub value: Vec<f64>,
}

impl ReadingBatch {
    pub fn len(&self) -> usize {
        self.timestamp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamp.is_empty()
    }

    /// Consecutive row ranges sharing a node.
    pub fn node_runs(&self) -> impl Iterator<Item = (&str, std::ops::Range<usize>)> {
        let mut start = 0;
        std::iter::from_fn(move || {
            if start >= self.node.len() {
                return None;
            }
            let name = &self.node[start];
            let len = self.node[start..].iter().take_while(|n| *n == name).count();
            let range = start..start + len;
            start += len;
            Some((name.as_str(), range))
        })
    }
}

#[async_trait]
pub trait Datalake: Send + Sync {
    /// Id selector yields at most one record; window selector yields every
    /// overlapping job. Ordered by job id.
    async fn fetch_jobs(&self, selector: &JobSelector) -> Result<Vec<JobRecord>, DatalakeError>;

    /// Node given: that node's rows only. Node absent: all nodes.
    async fn fetch_readings(&self, query: &ReadingQuery) -> Result<ReadingBatch, DatalakeError>;

    /// Cheap reachability probe.
    async fn ping(&self) -> Result<(), DatalakeError>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatalakeKind {
    ColumnarFiles,
    RemoteHttp,
}

/// Which datalake the chat route reads from.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DatalakeConfig {
    pub kind: DatalakeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    pub subset: String,
}

impl DatalakeConfig {
    pub fn columnar(root: impl Into<PathBuf>, subset: impl Into<String>) -> Self {
        Self { kind: DatalakeKind::ColumnarFiles, root: Some(root.into()), endpoint: None, subset: subset.into() }
    }

    pub fn remote(endpoint: impl Into<String>, subset: impl Into<String>) -> Self {
        Self { kind: DatalakeKind::RemoteHttp, root: None, endpoint: Some(endpoint.into()), subset: subset.into() }
    }

    pub fn validate(&self) -> Result<(), DatalakeError> {
        let bad = |msg: &str| Err(DatalakeError::InvalidConfig(msg.to_owned()));
        if self.subset.trim().is_empty() {
            return bad("subset must be non-empty");
        }
        match self.kind {
            DatalakeKind::ColumnarFiles => {
                if self.endpoint.is_some() {
                    return bad("columnar_files takes a root, not an endpoint");
                }
                match &self.root {
                    Some(r) if !r.as_os_str().is_empty() => Ok(()),
                    _ => bad("columnar_files requires a non-empty root"),
                }
            }
            DatalakeKind::RemoteHttp => {
                if self.root.is_some() {
                    return bad("remote_http takes an endpoint, not a root");
                }
                match &self.endpoint {
                    Some(e) if !e.trim().is_empty() => Ok(()),
                    _ => bad("remote_http requires a non-empty endpoint"),
                }
            }
        }
    }

    pub fn open(&self) -> Result<Arc<dyn Datalake>, DatalakeError> {
        self.validate()?;
        Ok(match self.kind {
            DatalakeKind::ColumnarFiles => {
                let root = self.root.as_ref().expect("validated");
                Arc::new(ColumnarFiles::open(root, &self.subset)?)
            }
            DatalakeKind::RemoteHttp => {
                Arc::new(RemoteDatalake::new(self.endpoint.as_deref().expect("validated"), &self.subset)?)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn t(h: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2022, 2, 1, h, 0, 0).unwrap()
    }

    #[test]
    fn window_semantics() {
        let w = TimeWindow::new(t(1), t(3)).unwrap();
        assert!(w.contains(t(1)) && !w.contains(t(3)));
        assert!(w.overlaps(t(0), t(2)));
        assert!(!w.overlaps(t(3), t(4)));
        assert!(!w.overlaps(t(0), t(1)));
        let empty = TimeWindow::new(t(2), t(2)).unwrap();
        assert!(!empty.overlaps(t(0), t(5)));
        assert!(TimeWindow::new(t(3), t(1)).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(DatalakeConfig::columnar("/data", "22-02").validate().is_ok());
        assert!(DatalakeConfig::columnar("", "22-02").validate().is_err());
        assert!(DatalakeConfig::remote("http://x", "").validate().is_err());
        let mut both = DatalakeConfig::remote("http://x", "s");
        both.root = Some("/data".into());
        assert!(both.validate().is_err());
    }

    #[test]
    fn node_runs_split() {
        let b = ReadingBatch {
            node: vec!["a".into(), "a".into(), "b".into()],
            timestamp: vec![t(0); 3],
            value: vec![1.0; 3],
            ..Default::default()
        };
        let runs: Vec<_> = b.node_runs().collect();
        assert_eq!(runs, [("a", 0..2), ("b", 2..3)]);
    }

    #[test]
    fn selector_json_shapes() {
        let id: JobSelector = serde_json::from_str(r#"{"job_id":"42"}"#).unwrap();
        assert_eq!(id, JobSelector::id("42"));
        let w: JobSelector =
            serde_json::from_str(r#"{"start":"2022-02-01T00:00:00Z","end":"2022-02-01T01:00:00Z"}"#).unwrap();
        assert!(matches!(w, JobSelector::Window { .. }));
    }
}
