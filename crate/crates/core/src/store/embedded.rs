use std::time::Duration;

use async_trait::async_trait;
use oxigraph::io::{RdfFormat, RdfParser};
use oxigraph::model::{GraphName, NamedNode, NamedNodeRef};
use oxigraph::sparql::{QueryResults, SparqlEvaluator};
use oxigraph::store::Store;

use super::{GraphLocks, GraphStore, QueryResult, StoreError, Term};
use crate::rdf::Iri;

/// In-process store backed by an in-memory oxigraph dataset.
#[derive(Clone)]
pub struct EmbeddedStore {
    store: Store,
    timeout: Duration,
    locks: std::sync::Arc<GraphLocks>,
}

fn internal(e: impl std::fmt::Display) -> StoreError {
    StoreError::Internal(e.to_string())
}

fn named(graph: &Iri) -> Result<NamedNode, StoreError> {
    NamedNode::new(graph.as_str()).map_err(internal)
}

impl EmbeddedStore {
    pub fn new() -> Result<Self, StoreError> {
        Self::with_timeout(Duration::from_secs(30))
    }

    pub fn with_timeout(timeout: Duration) -> Result<Self, StoreError> {
        Ok(Self { store: Store::new().map_err(internal)?, timeout, locks: Default::default() })
    }

    /// Direct handle, for tests and the mock protocol server.
    pub fn inner(&self) -> &Store {
        &self.store
    }

    pub fn graph_len(&self, graph: &Iri) -> Result<usize, StoreError> {
        let g = named(graph)?;
        Ok(self.store.quads_for_pattern(None, None, None, Some(g.as_ref().into())).count())
    }

    pub fn named_graphs(&self) -> Result<Vec<String>, StoreError> {
        self.store
            .named_graphs()
            .map(|g| g.map(|g| g.to_string().trim_matches(['<', '>']).to_owned()).map_err(internal))
            .collect()
    }

    /// Synchronous load; returns the triple count.
    pub fn load_ntriples(&self, graph: &Iri, ntriples: &[u8]) -> Result<u64, StoreError> {
        let g = named(graph)?;
        let quads = RdfParser::from_format(RdfFormat::NTriples)
            .with_default_graph(g.as_ref())
            .for_slice(ntriples)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| StoreError::ParseRejected(e.to_string()))?;
        let n = quads.len() as u64;
        self.store.extend(quads).map_err(internal)?;
        Ok(n)
    }

    pub fn run_query(&self, sparql: &str, default_graphs: &[Iri]) -> Result<QueryResult, StoreError> {
        let mut prepared = SparqlEvaluator::new()
            .parse_query(sparql)
            .map_err(|e| StoreError::QueryRejected { status: 400, body: e.to_string() })?;
        let graphs = default_graphs.iter().map(|g| named(g).map(GraphName::from)).collect::<Result<Vec<_>, _>>()?;
        prepared.dataset_mut().set_default_graph(graphs);
        let results = prepared
            .on_store(&self.store)
            .execute()
            .map_err(|e| StoreError::QueryRejected { status: 400, body: e.to_string() })?;
        match results {
            QueryResults::Solutions(solutions) => {
                let variables: Vec<String> = solutions.variables().iter().map(|v| v.as_str().to_owned()).collect();
                let mut rows = Vec::new();
                for s in solutions {
                    let s = s.map_err(|e| StoreError::QueryRejected { status: 400, body: e.to_string() })?;
                    rows.push(s.values().iter().map(|t| Term::from_oxigraph(t.as_ref())).collect());
                }
                Ok(QueryResult { variables, rows })
            }
            QueryResults::Boolean(b) => Ok(QueryResult {
                variables: vec!["boolean".into()],
                rows: vec![vec![Term::Literal {
                    value: b.to_string(),
                    datatype: Some(crate::rdf::XSD_NS.to_owned() + "boolean"),
                    lang: None,
                }]],
            }),
            QueryResults::Graph(_) => {
                Err(StoreError::QueryRejected { status: 400, body: "CONSTRUCT/DESCRIBE results are not tabular".into() })
            }
        }
    }

    async fn blocking<T: Send + 'static>(
        &self,
        f: impl FnOnce(&EmbeddedStore) -> Result<T, StoreError> + Send + 'static,
    ) -> Result<T, StoreError> {
        let this = self.clone();
        let task = tokio::task::spawn_blocking(move || f(&this));
        match tokio::time::timeout(self.timeout, task).await {
            Err(_) => Err(StoreError::Timeout(self.timeout)),
            Ok(joined) => joined.map_err(internal)?,
        }
    }
}

#[async_trait]
impl GraphStore for EmbeddedStore {
    async fn upload(&self, graph: &Iri, ntriples: Vec<u8>) -> Result<u64, StoreError> {
        let lock = self.locks.get(graph);
        let _guard = lock.lock().await;
        let graph = graph.clone();
        self.blocking(move |s| s.load_ntriples(&graph, &ntriples)).await
    }

    async fn query(&self, sparql: &str, default_graphs: &[Iri]) -> Result<QueryResult, StoreError> {
        let sparql = sparql.to_owned();
        let graphs = default_graphs.to_vec();
        self.blocking(move |s| s.run_query(&sparql, &graphs)).await
    }

    async fn delete_graph(&self, graph: &Iri) -> Result<(), StoreError> {
        let g = named(graph)?;
        self.blocking(move |s| {
            s.store.remove_named_graph(NamedNodeRef::from(&g)).map(|_| ()).map_err(internal)
        })
        .await
    }

    async fn ping(&self) -> Result<(), StoreError> {
        Ok(())
    }
}
