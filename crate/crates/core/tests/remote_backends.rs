//! The same questions answered through the HTTP store, the HTTP datalake and
//! the LLM client must match the all-local backend.

mod common;

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;
use oda_core::bench::corrupt::corrupt;
use oda_core::bench::{generate_corpus, CorpusQuestion};
use oda_core::config::AppConfig;
use oda_core::datalake::synth::SynthDataset;
use oda_core::datalake::{remote, DatalakeConfig, JobSelector, TimeWindow};
use oda_core::orchestrator::{Backend, ChatError, ChatRequest};
use oda_core::query_pipeline::RuleId;
use oda_core::sparql::llm::GenerationMode;
use oda_core::sparql::SparqlError;
use oda_core::store::{StoreConfig, StoreMode};

async fn corpus(ds: &SynthDataset, n: usize) -> Vec<CorpusQuestion> {
    let lake = dataset_config(ds).open().unwrap();
    let m = &ds.manifest;
    let jobs = lake.fetch_jobs(&JobSelector::window(TimeWindow::new(m.month_start, m.month_end).unwrap())).await.unwrap();
    generate_corpus(m, &jobs, n, SEED)
}

async fn answers(b: &Backend, qs: &[CorpusQuestion]) -> Vec<Vec<Vec<String>>> {
    let mut out = Vec::new();
    for q in qs {
        out.push(b.chat(ChatRequest::new(&q.text)).await.unwrap_or_else(|e| panic!("{}: {e}", q.text)).rows);
    }
    out
}

fn remote_store(url: &str) -> StoreConfig {
    StoreConfig {
        mode: StoreMode::Remote,
        query_endpoint: Some(format!("{url}/sparql")),
        gsp_endpoint: Some(format!("{url}/gsp")),
        keep_last_n: 2,
        ..Default::default()
    }
}

#[tokio::test]
async fn remote_store_matches_embedded() {
    let (_dir, ds) = synth(&small_spec(), SEED);
    let qs = corpus(&ds, 24).await;
    let local = backend_for(&ds, AppConfig::default()).await;
    let want = answers(&local, &qs).await;

    let (url, mock) = spawn_sparql_mock().await;
    let remote = backend_for(&ds, AppConfig { store: remote_store(&url), ..Default::default() }).await;
    assert_eq!(answers(&remote, &qs).await, want);

    let uploads = mock.uploads.lock().unwrap().clone();
    assert_eq!(uploads[0], "https://oda.example/graph/base");
    assert!(uploads.len() > 3, "expected VKG uploads, got {uploads:?}");
    assert!(uploads[1..].iter().all(|g| g.starts_with("https://oda.example/graph/vkg/")));
    // keep_last_n = 2 plus the base graph
    let graphs = mock.store.named_graphs().unwrap();
    assert!(graphs.len() <= 3, "{graphs:?}");
    assert!(graphs.iter().any(|g| g.contains("/graph/base")));
}

#[tokio::test]
async fn remote_datalake_matches_columnar() {
    let (_dir, ds) = synth(&small_spec(), SEED);
    let qs = corpus(&ds, 24).await;
    let local = backend_for(&ds, AppConfig::default()).await;
    let want = answers(&local, &qs).await;

    let lake_url = spawn(remote::router(dataset_config(&ds).open().unwrap())).await;
    let config = AppConfig {
        topology_path: Some(ds.topology_path.clone()),
        metadata_path: Some(ds.metadata_path.clone()),
        ..Default::default()
    };
    let b = Backend::new(config).unwrap();
    b.select_dataset(DatalakeConfig::remote(&lake_url, &ds.subset)).await.unwrap();
    assert_eq!(answers(&b, &qs).await, want);
    assert_eq!(b.health().await.datalake, Some(true));
}

#[tokio::test]
async fn remote_datalake_down_is_unavailable() {
    let (_dir, ds) = synth(&small_spec(), SEED);
    let config = AppConfig {
        topology_path: Some(ds.topology_path.clone()),
        metadata_path: Some(ds.metadata_path.clone()),
        ..Default::default()
    };
    let b = Backend::new(config).unwrap();
    let err = b.select_dataset(DatalakeConfig::remote("http://127.0.0.1:9", &ds.subset)).await.unwrap_err();
    assert!(matches!(err, ChatError::DatalakeUnavailable(_)), "{err:?}");
}

fn llm_config(url: &str, timeout_ms: u64) -> AppConfig {
    let mut c = AppConfig::default();
    c.llm.mode = GenerationMode::Llm;
    c.llm.endpoint = Some(url.to_owned());
    c.llm.timeout_ms = timeout_ms;
    c
}

#[tokio::test]
async fn llm_mode_refines_corrupted_replies() {
    let (_dir, ds) = synth(&small_spec(), SEED);
    let qs = corpus(&ds, 24).await;
    let local = backend_for(&ds, AppConfig::default()).await;
    let vocab = local.vocabulary().clone();

    // The mock model answers with a damaged copy of the template query,
    // wrapped in chatter and a code fence.
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut replies = HashMap::new();
    let mut want = Vec::new();
    for (i, q) in qs.iter().enumerate() {
        let resp = local.chat(ChatRequest::new(&q.text)).await.unwrap();
        let class = RuleId::ALL[i % RuleId::ALL.len()];
        let damaged = corrupt(&resp.query, class, &vocab, &mut rng).unwrap_or(resp.query.clone());
        replies.insert(q.text.clone(), format!("Here is the query:\n```sparql\n{damaged}\n```\nHope this helps."));
        want.push(resp.rows);
    }
    let replies = Arc::new(replies);
    let responder: Responder = Arc::new(move |q: &str| replies.get(q).cloned().unwrap_or_else(|| "no idea".into()));
    let (url, mock) = spawn_llm_mock(responder, Duration::ZERO).await;

    let b = backend_for(&ds, llm_config(&url, 10_000)).await;
    let mut refined = 0;
    for (q, w) in qs.iter().zip(&want) {
        let resp = b.chat(ChatRequest::new(&q.text)).await.unwrap_or_else(|e| panic!("{}: {e}", q.text));
        assert_eq!(&resp.rows, w, "{}", q.text);
        assert!(resp.refinement.unresolved.is_empty());
        refined += usize::from(resp.refinement.changed);
        assert!(resp.timings.llm_inference > 0.0);
    }
    assert_eq!(refined, qs.len());

    let prompts = mock.prompts.lock().unwrap();
    assert_eq!(prompts.len(), qs.len());
    let msgs = prompts[0]["messages"].as_array().unwrap();
    // system, k = 4 example pairs, question
    assert_eq!(msgs.len(), 1 + 2 * 4 + 1);
    assert!(msgs[0]["content"].as_str().unwrap().contains("https://oda.example/ontology#"));
    assert_eq!(prompts[0]["temperature"], 0.0);

    // Template mode can still be picked per request.
    let mut req = ChatRequest::new(&qs[0].text);
    req.options.mode = Some(GenerationMode::Template);
    assert!(b.chat(req).await.unwrap().archetype.is_some());
}

#[tokio::test]
async fn llm_failures_map_to_gateway_errors() {
    let (_dir, ds) = synth(&small_spec(), SEED);
    let q = "List all jobs running between 2022-02-03 00:00:00 and 2022-02-04 00:00:00.";

    let slow: Responder = Arc::new(|_| "SELECT * WHERE { ?s ?p ?o }".into());
    let (url, _) = spawn_llm_mock(slow, Duration::from_millis(500)).await;
    let b = backend_for(&ds, llm_config(&url, 100)).await;
    let err = b.chat(ChatRequest::new(q)).await.unwrap_err();
    assert!(matches!(err, ChatError::Generation(SparqlError::LlmTimeout(_))), "{err:?}");
    assert_eq!(err.status().as_u16(), 504);

    let b = backend_for(&ds, llm_config("http://127.0.0.1:9", 1000)).await;
    let err = b.chat(ChatRequest::new(q)).await.unwrap_err();
    assert!(matches!(err, ChatError::Generation(_)), "{err:?}");
    assert_eq!(err.status().as_u16(), 502);
    assert_eq!(b.health().await.llm, Some(false));

    let chatty: Responder = Arc::new(|_| "I cannot answer that.".into());
    let (url, _) = spawn_llm_mock(chatty, Duration::ZERO).await;
    let b = backend_for(&ds, llm_config(&url, 1000)).await;
    let err = b.chat(ChatRequest::new(q)).await.unwrap_err();
    assert!(err.is_rejection(), "{err:?}");
    assert_eq!(err.status().as_u16(), 422);
}
