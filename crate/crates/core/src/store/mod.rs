//! Named-graph RDF store: upload N-Triples per graph, run SELECT queries with
//! an explicit default-graph dataset, evict old request graphs.

mod embedded;
mod remote;

use std::collections::{HashMap, VecDeque};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use crate::ontology::GRAPH_BASE;
use crate::rdf::Iri;
pub use embedded::EmbeddedStore;
pub use remote::RemoteStore;

pub const DEFAULT_KEEP_LAST_N: usize = 16;

pub fn base_kg_graph() -> Iri {
    Iri::new_unchecked(format!("{GRAPH_BASE}base"))
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store unreachable: {0}")]
    Unreachable(String),
    #[error("store rejected the upload: {0}")]
    ParseRejected(String),
    #[error("store rejected the query ({status}): {body}")]
    QueryRejected { status: u16, body: String },
    #[error("store request timed out after {0:?}")]
    Timeout(Duration),
    #[error("store config: {0}")]
    InvalidConfig(String),
    #[error("store internal error: {0}")]
    Internal(String),
}

/// One result cell.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Term {
    Iri { value: String },
    Literal {
        value: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        datatype: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lang: Option<String>,
    },
    Blank { value: String },
    Unbound,
}

impl Term {
    /// Plain text for tables and CSV; empty when unbound.
    pub fn lexical(&self) -> &str {
        match self {
            Term::Iri { value } | Term::Literal { value, .. } | Term::Blank { value } => value,
            Term::Unbound => "",
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Term::Literal { value, .. } => value.parse().ok(),
            _ => None,
        }
    }

    pub(crate) fn from_oxigraph(t: Option<&oxigraph::model::Term>) -> Self {
        use oxigraph::model::Term as T;
        match t {
            None => Term::Unbound,
            Some(T::NamedNode(n)) => Term::Iri { value: n.as_str().to_owned() },
            Some(T::BlankNode(b)) => Term::Blank { value: b.as_str().to_owned() },
            Some(T::Literal(l)) => {
                let lang = l.language().map(str::to_owned);
                let datatype = lang.is_none().then(|| l.datatype().as_str().to_owned());
                Term::Literal { value: l.value().to_owned(), datatype, lang }
            }
            #[allow(unreachable_patterns)]
            Some(other) => Term::Literal { value: other.to_string(), datatype: None, lang: None },
        }
    }
}

/// Tabular SELECT result; every row has one cell per variable.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub variables: Vec<String>,
    pub rows: Vec<Vec<Term>>,
}

impl QueryResult {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows as plain strings, sorted, for order-insensitive comparison.
    pub fn sorted_lexical_rows(&self) -> Vec<Vec<String>> {
        let mut rows: Vec<Vec<String>> =
            self.rows.iter().map(|r| r.iter().map(|t| t.lexical().to_owned()).collect()).collect();
        rows.sort();
        rows
    }

    pub fn column(&self, name: &str) -> Option<impl Iterator<Item = &Term>> {
        let i = self.variables.iter().position(|v| v == name)?;
        Some(self.rows.iter().map(move |r| &r[i]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoreMode {
    Embedded,
    Remote,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StoreConfig {
    pub mode: StoreMode,
    pub query_endpoint: Option<String>,
    pub gsp_endpoint: Option<String>,
    pub keep_last_n: usize,
    pub timeout_ms: u64,
}

impl Default for StoreConfig {
    fn default() -> Self {
        Self { mode: StoreMode::Embedded, query_endpoint: None, gsp_endpoint: None, keep_last_n: DEFAULT_KEEP_LAST_N, timeout_ms: 30_000 }
    }
}

impl StoreConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    pub fn open(&self) -> Result<Arc<dyn GraphStore>, StoreError> {
        match self.mode {
            StoreMode::Embedded => Ok(Arc::new(EmbeddedStore::with_timeout(self.timeout())?)),
            StoreMode::Remote => {
                let (Some(q), Some(g)) = (&self.query_endpoint, &self.gsp_endpoint) else {
                    return Err(StoreError::InvalidConfig("remote mode needs query_endpoint and gsp_endpoint".into()));
                };
                Ok(Arc::new(RemoteStore::new(q, g, self.timeout())?))
            }
        }
    }
}

#[async_trait]
pub trait GraphStore: Send + Sync {
    /// Appends N-Triples to `graph`; returns the number of triples loaded.
    async fn upload(&self, graph: &Iri, ntriples: Vec<u8>) -> Result<u64, StoreError>;

    /// Evaluates a SELECT (or ASK) whose default graph is the merge of
    /// `default_graphs`.
    async fn query(&self, sparql: &str, default_graphs: &[Iri]) -> Result<QueryResult, StoreError>;

    async fn delete_graph(&self, graph: &Iri) -> Result<(), StoreError>;

    async fn ping(&self) -> Result<(), StoreError>;

    /// Sequential appends of chunk files into one graph.
    async fn upload_chunks(&self, graph: &Iri, chunks: &[PathBuf]) -> Result<u64, StoreError> {
        let mut total = 0;
        for path in chunks {
            let body = tokio::fs::read(path).await.map_err(|e| StoreError::Internal(format!("{}: {e}", path.display())))?;
            total += self.upload(graph, body).await?;
        }
        Ok(total)
    }
}

/// Per-graph upload serialization.
#[derive(Default)]
pub(crate) struct GraphLocks(Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>);

impl GraphLocks {
    pub(crate) fn get(&self, graph: &Iri) -> Arc<tokio::sync::Mutex<()>> {
        self.0.lock().unwrap().entry(graph.as_str().to_owned()).or_default().clone()
    }
}

/// Graphs to drop so that at most `keep_last_n` request graphs remain,
/// oldest first. The Base-KG is never a candidate.
pub fn eviction_candidates(history: &[Iri], keep_last_n: usize, base: &Iri) -> Vec<Iri> {
    let requests: Vec<&Iri> = history.iter().filter(|g| *g != base).collect();
    let excess = requests.len().saturating_sub(keep_last_n);
    requests.into_iter().take(excess).cloned().collect()
}

/// Tracks request graphs in upload order.
pub struct GraphHistory {
    base: Iri,
    keep_last_n: usize,
    order: Mutex<VecDeque<Iri>>,
}

impl GraphHistory {
    pub fn new(keep_last_n: usize) -> Self {
        Self { base: base_kg_graph(), keep_last_n, order: Mutex::new(VecDeque::new()) }
    }

    pub fn record(&self, graph: Iri) {
        if graph != self.base {
            self.order.lock().unwrap().push_back(graph);
        }
    }

    pub fn len(&self) -> usize {
        self.order.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Deletes the oldest graphs beyond the retention bound.
    pub async fn evict(&self, store: &dyn GraphStore) -> Result<Vec<Iri>, StoreError> {
        let victims = {
            let mut order = self.order.lock().unwrap();
            let history: Vec<Iri> = order.iter().cloned().collect();
            let victims = eviction_candidates(&history, self.keep_last_n, &self.base);
            order.drain(..victims.len());
            victims
        };
        for g in &victims {
            store.delete_graph(g).await?;
        }
        Ok(victims)
    }
}
