#![allow(dead_code)]

pub mod gen;
pub mod oracle;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use sha2::{Digest, Sha256};
use tempfile::TempDir;

use oda_core::config::AppConfig;
use oda_core::datalake::registry::SubsetDescriptor;
use oda_core::datalake::synth::{generate_synthetic, SynthDataset, SynthSpec};
use oda_core::datalake::DatalakeConfig;
use oda_core::orchestrator::Backend;
use oda_core::rdf::Iri;
use oda_core::store::{EmbeddedStore, Term};

pub const SEED: u64 = 2022;

/// One month, 8 nodes in 2 racks, 50 jobs, one metric every 20 s.
pub fn month_spec() -> SynthSpec {
    SynthSpec { nodes: 8, racks: 2, jobs: 50, cadence_secs: 20, month: "2022-02".into(), ..Default::default() }
}

/// Same shape at a coarse cadence, for fast tests.
pub fn small_spec() -> SynthSpec {
    SynthSpec { cadence_secs: 600, jobs: 20, ..month_spec() }
}

pub fn synth(spec: &SynthSpec, seed: u64) -> (TempDir, SynthDataset) {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate_synthetic(dir.path(), seed, spec).unwrap();
    (dir, ds)
}

pub fn dataset_config(ds: &SynthDataset) -> DatalakeConfig {
    DatalakeConfig::columnar(&ds.root, &ds.subset)
}

pub async fn backend_for(ds: &SynthDataset, mut config: AppConfig) -> Backend {
    config.data_root = Some(ds.root.clone());
    let b = Backend::new(config).unwrap();
    b.select_dataset(dataset_config(ds)).await.unwrap();
    b
}

/// Serves `router` on an ephemeral port; returns `http://127.0.0.1:port`.
pub async fn spawn(router: Router) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, router).await.unwrap();
    });
    format!("http://{addr}")
}

// ---- subset registry ----

pub const REGISTRY_SUBSETS: usize = 31;

pub fn registry_payload(i: usize) -> Vec<u8> {
    (0..(512 + 97 * i)).map(|k| ((k * 31 + i) % 251) as u8).collect()
}

/// Thirty-one consecutive months, 20-05 through 22-11.
pub fn registry_ids() -> Vec<String> {
    (0..REGISTRY_SUBSETS).map(|i| {
        let m = 4 + i;
        format!("{:02}-{:02}", 20 + m / 12, m % 12 + 1)
    }).collect()
}

pub async fn spawn_registry() -> (String, Vec<SubsetDescriptor>) {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let descs: Vec<SubsetDescriptor> = registry_ids()
        .into_iter()
        .enumerate()
        .map(|(i, id)| {
            let body = registry_payload(i);
            SubsetDescriptor {
                label: format!("M100 {id}"),
                byte_size: body.len() as u64,
                download_url: format!("{base}/files/{id}.tar"),
                sha256: Some(hex::encode(Sha256::digest(&body))),
                subset_id: id,
            }
        })
        .collect();
    let manifest = serde_json::to_string(&descs).unwrap();
    let files: Arc<HashMap<String, Vec<u8>>> = Arc::new(
        registry_ids().into_iter().enumerate().map(|(i, id)| (format!("{id}.tar"), registry_payload(i))).collect(),
    );
    let router = Router::new()
        .route("/manifest.json", get(move || async move { manifest }))
        .route(
            "/files/{name}",
            get(|State(files): State<Arc<HashMap<String, Vec<u8>>>>, Path(name): Path<String>| async move {
                match files.get(&name) {
                    Some(b) => (StatusCode::OK, b.clone()).into_response(),
                    None => StatusCode::NOT_FOUND.into_response(),
                }
            }),
        )
        .with_state(files);
    tokio::spawn(async move {
        axum::serve(listener, router).await.unwrap();
    });
    (base, descs)
}

// ---- SPARQL protocol + graph store protocol over an embedded store ----

fn results_json(r: &oda_core::store::QueryResult) -> serde_json::Value {
    let bindings: Vec<serde_json::Value> = r
        .rows
        .iter()
        .map(|row| {
            let mut b = serde_json::Map::new();
            for (v, t) in r.variables.iter().zip(row) {
                let cell = match t {
                    Term::Iri { value } => serde_json::json!({"type": "uri", "value": value}),
                    Term::Blank { value } => serde_json::json!({"type": "bnode", "value": value}),
                    Term::Literal { value, datatype, lang } => {
                        let mut m = serde_json::json!({"type": "literal", "value": value});
                        if let Some(d) = datatype {
                            m["datatype"] = d.clone().into();
                        }
                        if let Some(l) = lang {
                            m["xml:lang"] = l.clone().into();
                        }
                        m
                    }
                    Term::Unbound => continue,
                };
                b.insert(v.clone(), cell);
            }
            serde_json::Value::Object(b)
        })
        .collect();
    serde_json::json!({"head": {"vars": r.variables}, "results": {"bindings": bindings}})
}

fn pairs(raw: Option<String>) -> Vec<(String, String)> {
    raw.map(|q| url_pairs(&q)).unwrap_or_default()
}

fn url_pairs(q: &str) -> Vec<(String, String)> {
    q.split('&')
        .filter_map(|kv| kv.split_once('='))
        .map(|(k, v)| {
            let dec = |s: &str| percent_encoding::percent_decode_str(&s.replace('+', " ")).decode_utf8_lossy().into_owned();
            (dec(k), dec(v))
        })
        .collect()
}

#[derive(Clone)]
pub struct SparqlMock {
    pub store: EmbeddedStore,
    pub uploads: Arc<Mutex<Vec<String>>>,
}

pub async fn spawn_sparql_mock() -> (String, SparqlMock) {
    let mock = SparqlMock { store: EmbeddedStore::new().unwrap(), uploads: Default::default() };
    let router = Router::new()
        .route(
            "/sparql",
            post(|State(m): State<SparqlMock>, axum::extract::RawQuery(q): axum::extract::RawQuery, body: Bytes| async move {
                let graphs: Vec<Iri> = pairs(q)
                    .into_iter()
                    .filter(|(k, _)| k == "default-graph-uri")
                    .map(|(_, v)| Iri::parse(v).unwrap())
                    .collect();
                match m.store.run_query(&String::from_utf8_lossy(&body), &graphs) {
                    Ok(r) => (
                        StatusCode::OK,
                        [("content-type", "application/sparql-results+json")],
                        results_json(&r).to_string(),
                    )
                        .into_response(),
                    Err(e) => (StatusCode::BAD_REQUEST, e.to_string()).into_response(),
                }
            }),
        )
        .route(
            "/gsp",
            post(|State(m): State<SparqlMock>, Query(p): Query<HashMap<String, String>>, body: Bytes| async move {
                let Some(g) = p.get("graph") else { return (StatusCode::BAD_REQUEST, "graph missing".to_owned()) };
                m.uploads.lock().unwrap().push(g.clone());
                match m.store.load_ntriples(&Iri::parse(g.clone()).unwrap(), &body) {
                    Ok(_) => (StatusCode::NO_CONTENT, String::new()),
                    Err(e) => (StatusCode::BAD_REQUEST, e.to_string()),
                }
            })
            .delete(|State(m): State<SparqlMock>, Query(p): Query<HashMap<String, String>>| async move {
                let Some(g) = p.get("graph") else { return StatusCode::BAD_REQUEST };
                let node = oxigraph::model::NamedNode::new(g.clone()).unwrap();
                m.store.inner().remove_named_graph(node.as_ref()).unwrap();
                StatusCode::NO_CONTENT
            }),
        )
        .with_state(mock.clone());
    (spawn(router).await, mock)
}

// ---- OpenAI-compatible completion endpoint ----

pub type Responder = Arc<dyn Fn(&str) -> String + Send + Sync>;

#[derive(Clone)]
pub struct LlmMock {
    pub prompts: Arc<Mutex<Vec<serde_json::Value>>>,
    responder: Responder,
    delay: std::time::Duration,
}

/// Replies with `responder(last user message)` after `delay`.
pub async fn spawn_llm_mock(responder: Responder, delay: std::time::Duration) -> (String, LlmMock) {
    let mock = LlmMock { prompts: Default::default(), responder, delay };
    let router = Router::new()
        .route(
            "/chat/completions",
            post(|State(m): State<LlmMock>, Json(body): Json<serde_json::Value>| async move {
                let question = body["messages"]
                    .as_array()
                    .and_then(|a| a.last())
                    .and_then(|m| m["content"].as_str())
                    .unwrap_or_default()
                    .to_owned();
                m.prompts.lock().unwrap().push(body);
                tokio::time::sleep(m.delay).await;
                let content = (m.responder)(&question);
                Json(serde_json::json!({
                    "choices": [{"message": {"role": "assistant", "content": content}}],
                    "usage": {"prompt_tokens": 100, "completion_tokens": 50}
                }))
            }),
        )
        .route("/models", get(|| async { Json(serde_json::json!({"data": []})) }))
        .with_state(mock.clone());
    (spawn(router).await, mock)
}
