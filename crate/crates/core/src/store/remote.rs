use std::time::Duration;

use async_trait::async_trait;
use oxigraph::io::{RdfFormat, RdfParser};
use oxigraph::sparql::results::{QueryResultsFormat, QueryResultsParser, SliceQueryResultsParserOutput};

use super::{GraphLocks, GraphStore, QueryResult, StoreError, Term};
use crate::rdf::{Iri, XSD_NS};

/// SPARQL 1.1 Protocol for queries, Graph Store HTTP Protocol for uploads.
pub struct RemoteStore {
    query_endpoint: String,
    gsp_endpoint: String,
    timeout: Duration,
    client: reqwest::Client,
    locks: GraphLocks,
}

impl RemoteStore {
    pub fn new(query_endpoint: &str, gsp_endpoint: &str, timeout: Duration) -> Result<Self, StoreError> {
        if query_endpoint.trim().is_empty() || gsp_endpoint.trim().is_empty() {
            return Err(StoreError::InvalidConfig("remote store needs both endpoints".into()));
        }
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| StoreError::InvalidConfig(e.to_string()))?;
        Ok(Self {
            query_endpoint: query_endpoint.to_owned(),
            gsp_endpoint: gsp_endpoint.to_owned(),
            timeout,
            client,
            locks: GraphLocks::default(),
        })
    }

    fn send_error(&self, url: &str, e: reqwest::Error) -> StoreError {
        if e.is_timeout() {
            StoreError::Timeout(self.timeout)
        } else {
            StoreError::Unreachable(format!("{url}: {e}"))
        }
    }
}

pub(crate) fn parse_results_json(body: &[u8]) -> Result<QueryResult, StoreError> {
    let bad = |e: &dyn std::fmt::Display| StoreError::Internal(format!("bad results document: {e}"));
    let parsed = QueryResultsParser::from_format(QueryResultsFormat::Json).for_slice(body).map_err(|e| bad(&e))?;
    match parsed {
        SliceQueryResultsParserOutput::Solutions(solutions) => {
            let variables: Vec<String> = solutions.variables().iter().map(|v| v.as_str().to_owned()).collect();
            let mut rows = Vec::new();
            for s in solutions {
                let s = s.map_err(|e| bad(&e))?;
                rows.push(s.values().iter().map(|t| Term::from_oxigraph(t.as_ref())).collect());
            }
            Ok(QueryResult { variables, rows })
        }
        SliceQueryResultsParserOutput::Boolean(b) => Ok(QueryResult {
            variables: vec!["boolean".into()],
            rows: vec![vec![Term::Literal { value: b.to_string(), datatype: Some(format!("{XSD_NS}boolean")), lang: None }]],
        }),
    }
}

fn count_ntriples(body: &[u8]) -> Result<u64, StoreError> {
    let mut n = 0;
    for q in RdfParser::from_format(RdfFormat::NTriples).for_slice(body) {
        q.map_err(|e| StoreError::ParseRejected(e.to_string()))?;
        n += 1;
    }
    Ok(n)
}

#[async_trait]
impl GraphStore for RemoteStore {
    async fn upload(&self, graph: &Iri, ntriples: Vec<u8>) -> Result<u64, StoreError> {
        let n = count_ntriples(&ntriples)?;
        let lock = self.locks.get(graph);
        let _guard = lock.lock().await;
        let resp = self
            .client
            .post(&self.gsp_endpoint)
            .query(&[("graph", graph.as_str())])
            .header("content-type", "application/n-triples")
            .body(ntriples)
            .send()
            .await
            .map_err(|e| self.send_error(&self.gsp_endpoint, e))?;
        let status = resp.status();
        if status.is_success() {
            return Ok(n);
        }
        let body = resp.text().await.unwrap_or_default();
        Err(if status.is_client_error() {
            StoreError::ParseRejected(body)
        } else {
            StoreError::Unreachable(format!("{}: HTTP {status}: {body}", self.gsp_endpoint))
        })
    }

    async fn query(&self, sparql: &str, default_graphs: &[Iri]) -> Result<QueryResult, StoreError> {
        let params: Vec<(&str, &str)> = default_graphs.iter().map(|g| ("default-graph-uri", g.as_str())).collect();
        let resp = self
            .client
            .post(&self.query_endpoint)
            .query(&params)
            .header("content-type", "application/sparql-query")
            .header("accept", "application/sparql-results+json")
            .body(sparql.to_owned())
            .send()
            .await
            .map_err(|e| self.send_error(&self.query_endpoint, e))?;
        let status = resp.status();
        let body = resp.bytes().await.map_err(|e| self.send_error(&self.query_endpoint, e))?;
        if status.is_success() {
            parse_results_json(&body)
        } else if status.is_client_error() {
            Err(StoreError::QueryRejected { status: status.as_u16(), body: String::from_utf8_lossy(&body).into_owned() })
        } else {
            Err(StoreError::Unreachable(format!("{}: HTTP {status}", self.query_endpoint)))
        }
    }

    async fn delete_graph(&self, graph: &Iri) -> Result<(), StoreError> {
        let resp = self
            .client
            .delete(&self.gsp_endpoint)
            .query(&[("graph", graph.as_str())])
            .send()
            .await
            .map_err(|e| self.send_error(&self.gsp_endpoint, e))?;
        // deleting an absent graph is not an error for eviction
        if resp.status().is_success() || resp.status() == reqwest::StatusCode::NOT_FOUND {
            Ok(())
        } else {
            Err(StoreError::Unreachable(format!("{}: HTTP {}", self.gsp_endpoint, resp.status())))
        }
    }

    async fn ping(&self) -> Result<(), StoreError> {
        self.query("ASK {}", &[]).await.map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_json() {
        let body = br#"{"head":{"vars":["x","y"]},"results":{"bindings":[{"x":{"type":"literal","value":"1","datatype":"http://www.w3.org/2001/XMLSchema#integer"}}]}}"#;
        let r = parse_results_json(body).unwrap();
        assert_eq!(r.variables, ["x", "y"]);
        assert_eq!(r.rows[0][1], Term::Unbound);
        assert_eq!(r.rows[0][0].lexical(), "1");
    }

    #[test]
    fn bad_ntriples_rejected_locally() {
        assert!(matches!(count_ntriples(b"x y z"), Err(StoreError::ParseRejected(_))));
        assert_eq!(count_ntriples(b"").unwrap(), 0);
    }

    #[test]
    fn needs_both_endpoints() {
        assert!(RemoteStore::new("http://q", "", Duration::from_secs(1)).is_err());
    }
}
