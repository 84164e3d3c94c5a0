mod common;

use std::sync::Arc;

use serde_json::{json, Value};

use common::*;
use oda_core::config::AppConfig;
use oda_core::datalake::synth::SynthSpec;
use oda_core::orchestrator::http::router;
use oda_core::orchestrator::{Backend, ChatResponse, PREVIEW_ROWS};

fn many_jobs() -> SynthSpec {
    SynthSpec { jobs: 120, ..small_spec() }
}

async fn server(ds: &oda_core::datalake::synth::SynthDataset) -> String {
    let config = AppConfig { data_root: Some(ds.root.clone()), ..Default::default() };
    spawn(router(Arc::new(Backend::new(config).unwrap()))).await
}

async fn post(url: &str, body: Value) -> (u16, Value) {
    let r = reqwest::Client::new().post(url).json(&body).send().await.unwrap();
    let status = r.status().as_u16();
    (status, r.json().await.unwrap_or(Value::Null))
}

#[tokio::test]
async fn dataset_lifecycle_and_errors() {
    let (_dir, ds) = synth(&small_spec(), SEED);
    let base = server(&ds).await;

    let health: Value = reqwest::get(format!("{base}/api/health")).await.unwrap().json().await.unwrap();
    assert_eq!(health["status"], "ok");
    assert_eq!(health["store"], true);
    assert!(health["dataset"].is_null());

    let (s, body) = post(&format!("{base}/api/chat"), json!({"question": "List all jobs running between 2022-02-01 00:00:00 and 2022-02-02 00:00:00."})).await;
    assert_eq!(s, 409);
    assert_eq!(body["error"], "no_dataset_selected");

    let listed: Value = reqwest::get(format!("{base}/api/datasets")).await.unwrap().json().await.unwrap();
    assert_eq!(listed["subsets"], json!([ds.subset]));
    assert!(listed["selected"].is_null());

    let cfg = serde_json::to_value(dataset_config(&ds)).unwrap();
    let (s, ack) = post(&format!("{base}/api/dataset"), cfg.clone()).await;
    assert_eq!(s, 200, "{ack}");
    // 2 triples per rack, 4 per node
    assert_eq!(ack["base_kg_triples"], 2 * 2 + 4 * 8);
    assert_eq!(ack["uploaded"], true);
    let (_, again) = post(&format!("{base}/api/dataset"), cfg).await;
    assert_eq!(again["uploaded"], false);

    let listed: Value = reqwest::get(format!("{base}/api/datasets")).await.unwrap().json().await.unwrap();
    assert_eq!(listed["selected"]["subset"], ds.subset);

    let (s, body) = post(&format!("{base}/api/chat"), json!({"question": "   "})).await;
    assert_eq!(s, 400, "{body}");

    let (s, body) = post(&format!("{base}/api/chat"), json!({"question": "hello"})).await;
    assert_eq!(s, 422);
    assert_eq!(body["message"], "No valid key_entities found");

    let r = reqwest::get(format!("{base}/api/result/00000000-0000-0000-0000-000000000000.csv")).await.unwrap();
    assert_eq!(r.status().as_u16(), 404);

    let missing = json!({"kind": "columnar_files", "root": ds.root, "subset": "99-99"});
    let (s, body) = post(&format!("{base}/api/dataset"), missing).await;
    assert_eq!(s, 503, "{body}");
    assert_eq!(body["error"], "datalake_unavailable");

    let (s, body) = post(&format!("{base}/api/dataset"), json!({"kind": "columnar", "subset": "x"})).await;
    assert_eq!(s, 400);
    assert_eq!(body["error"], "invalid_request");
    let (s, _) = post(&format!("{base}/api/chat"), json!({"q": 1})).await;
    assert_eq!(s, 400);
    let (s, body) = post(&format!("{base}/api/dataset"), json!({"kind": "columnar_files", "subset": "x"})).await;
    assert_eq!(s, 400, "{body}");

    // a failed selection leaves the previous one active
    let listed: Value = reqwest::get(format!("{base}/api/datasets")).await.unwrap().json().await.unwrap();
    assert_eq!(listed["selected"]["subset"], ds.subset);
}

#[tokio::test]
async fn large_results_preview_and_csv() {
    let (_dir, ds) = synth(&many_jobs(), SEED);
    let base = server(&ds).await;
    post(&format!("{base}/api/dataset"), serde_json::to_value(dataset_config(&ds)).unwrap()).await;

    let q = "List all jobs running between 2022-02-01 00:00:00 and 2022-03-01 00:00:00.";
    let (s, body) = post(&format!("{base}/api/chat"), json!({"question": q})).await;
    assert_eq!(s, 200, "{body}");
    let resp: ChatResponse = serde_json::from_value(body).unwrap();
    assert!(resp.total_rows > 50, "only {} rows", resp.total_rows);
    assert_eq!(resp.rows.len(), resp.total_rows);
    assert_eq!(resp.preview, resp.rows[..PREVIEW_ROWS]);
    assert!(resp.vkg_graph.is_some());

    let r = reqwest::get(format!("{base}{}", resp.csv_url)).await.unwrap();
    assert_eq!(r.status().as_u16(), 200);
    assert!(r.headers()["content-type"].to_str().unwrap().starts_with("text/csv"));
    let text = r.text().await.unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), resp.columns);
    let rows: Vec<Vec<String>> = rdr.records().map(|r| r.unwrap().iter().map(str::to_owned).collect()).collect();
    assert_eq!(rows, resp.rows);
    assert_eq!(text.lines().count(), resp.total_rows + 1);

    let (_, small) = post(&format!("{base}/api/chat"), json!({"question": q, "options": {"limit": 50}})).await;
    let small: ChatResponse = serde_json::from_value(small).unwrap();
    assert_eq!(small.total_rows, 50);
    assert_eq!(small.preview, small.rows);
}
