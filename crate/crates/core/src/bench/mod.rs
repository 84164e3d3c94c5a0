//! Desk-scale benchmarks: serialization formats, corpus latency statistics
//! and triple-buffer memory.

pub mod corpus;
pub mod corrupt;
pub mod stats;

use std::io;
use std::time::Instant;

use chrono::{TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::orchestrator::{Backend, ChatRequest, TimingBreakdown};
use crate::rdf::{Iri, Literal, Object, Triple};
use crate::vkg::chunk::GaugedBuffer;
use crate::vkg::serialize::{serialize, RdfFormat};
use crate::vkg::{ChunkedEmitter, TripleSink, VkgStats};
pub use corpus::{generate_corpus, CorpusQuestion, QuestionParams};
pub use stats::StatSummary;

pub const BENCH_BASE: &str = "https://oda.example/bench/";
const PREDICATES: usize = 24;

/// Published means for the corpus summary rows, shown next to ours.
pub const REFERENCE_MEANS: [(&str, f64); 9] = [
    ("triples", 90_512.0),
    ("nodes", 30_666.0),
    ("data_points", 61_371.0),
    ("storage_mib", 3.68467),
    ("entities_extraction_s", 0.00001),
    ("data_fetching_s", 0.12104),
    ("vkg_creation_s", 1.53804),
    ("graph_storing_s", 1.24045),
    ("total_vkg_s", 2.89954),
];

fn local_name(rng: &mut ChaCha8Rng) -> String {
    const ALPHA: &[u8] = b"abcdefghijklmnopqrstuvwxyz";
    const ALNUM: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789";
    let len = rng.random_range(6..=12);
    let mut s = String::with_capacity(len);
    s.push(ALPHA[rng.random_range(0..ALPHA.len())] as char);
    for _ in 1..len {
        s.push(ALNUM[rng.random_range(0..ALNUM.len())] as char);
    }
    s
}

/// Random triples under one base IRI: random subject names, a small
/// predicate set and a mix of IRI and typed-literal objects.
pub fn random_triples(n: usize, seed: u64) -> impl Iterator<Item = Triple> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let predicates: Vec<Iri> =
        (0..PREDICATES).map(|i| Iri::new_unchecked(format!("{BENCH_BASE}p{i}_{}", local_name(&mut rng)))).collect();
    let epoch = Utc.with_ymd_and_hms(2022, 1, 1, 0, 0, 0).unwrap();
    (0..n).map(move |_| {
        let subject = Iri::new_unchecked(format!("{BENCH_BASE}{}", local_name(&mut rng)));
        let predicate = predicates[rng.random_range(0..PREDICATES)].clone();
        let object = match rng.random_range(0..5) {
            0 | 1 => Object::Iri(Iri::new_unchecked(format!("{BENCH_BASE}{}", local_name(&mut rng)))),
            2 => Object::Literal(Literal::string(local_name(&mut rng))),
            3 => Object::Literal(Literal::double(rng.random_range(0.0..1000.0))),
            _ => Object::Literal(Literal::date_time(epoch + chrono::Duration::seconds(rng.random_range(0..31_536_000)))),
        };
        Triple::new(subject, predicate, object)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SerializationRow {
    pub format: String,
    pub seconds: f64,
    pub bytes: u64,
}

/// Serializes the same triples in every format; returns the timing rows and
/// the outputs.
pub fn serialize_all(triples: &[Triple]) -> io::Result<Vec<(SerializationRow, Vec<u8>)>> {
    let mut out = Vec::new();
    for format in RdfFormat::ALL {
        let mut buf = Vec::new();
        let t = Instant::now();
        let bytes = serialize(format, triples, &mut buf)?;
        let seconds = t.elapsed().as_secs_f64();
        out.push((SerializationRow { format: format.name().into(), seconds, bytes }, buf));
    }
    Ok(out)
}

pub fn bench_serialization(n: usize, seed: u64) -> io::Result<Vec<SerializationRow>> {
    if n == 0 {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "need at least one triple"));
    }
    let triples: Vec<Triple> = random_triples(n, seed).collect();
    Ok(serialize_all(&triples)?.into_iter().map(|(row, _)| row).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryPoint {
    pub triples_added: usize,
    /// High-water triple count held in memory so far.
    pub peak_triples: usize,
    pub peak_bytes: usize,
}

/// Adds `max_triples` random triples to an in-memory buffer (or a chunked
/// emitter with batch `chunk`), sampling the buffer high-water mark every
/// `step` triples.
pub fn memory_profile(max_triples: usize, step: usize, chunk: Option<usize>, seed: u64) -> io::Result<Vec<MemoryPoint>> {
    if step == 0 {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "step must be at least 1"));
    }
    let mut curve = vec![MemoryPoint { triples_added: 0, peak_triples: 0, peak_bytes: 0 }];
    let dir = tempfile::tempdir()?;
    let graph = Iri::new_unchecked(format!("{BENCH_BASE}graph"));
    enum Sink {
        Buffer(GaugedBuffer),
        Chunked(ChunkedEmitter),
    }
    let mut sink = match chunk {
        None => Sink::Buffer(GaugedBuffer::default()),
        Some(b) => Sink::Chunked(ChunkedEmitter::new(dir.path(), graph, b)?),
    };
    for (i, t) in random_triples(max_triples, seed).enumerate() {
        let gauge = match &mut sink {
            Sink::Buffer(b) => {
                b.push(t)?;
                b.gauge
            }
            Sink::Chunked(c) => {
                c.push(t)?;
                c.gauge()
            }
        };
        let added = i + 1;
        if added % step == 0 || added == max_triples {
            curve.push(MemoryPoint { triples_added: added, peak_triples: gauge.peak_triples, peak_bytes: gauge.peak_bytes });
        }
    }
    if let Sink::Chunked(c) = sink {
        c.finish()?;
    }
    Ok(curve)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CorpusOutcome {
    Answered {
        columns: Vec<String>,
        rows: Vec<Vec<String>>,
        timings: TimingBreakdown,
        vkg_stats: Option<VkgStats>,
        vkg_graph: Option<String>,
        query: String,
    },
    Failed {
        error: String,
        message: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub index: usize,
    pub archetype: u8,
    pub question: String,
    pub outcome: CorpusOutcome,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub records: Vec<CorpusRecord>,
    pub summary: Vec<StatSummary>,
    pub wall_seconds: f64,
}

impl CorpusReport {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| matches!(r.outcome, CorpusOutcome::Failed { .. })).count()
    }
}

/// Nine rows: VKG size metrics and the VKG sub-task timings, over answered
/// questions (skipped VKGs count as zero).
pub fn summarize(records: &[CorpusRecord]) -> Vec<StatSummary> {
    let mut cols: [Vec<f64>; 9] = Default::default();
    for r in records {
        let CorpusOutcome::Answered { timings: t, vkg_stats, .. } = &r.outcome else { continue };
        let s = vkg_stats.unwrap_or_default();
        let values = [
            s.triple_count as f64,
            s.node_count as f64,
            s.data_points_fetched as f64,
            s.serialized_bytes as f64 / (1024.0 * 1024.0),
            t.entities_extraction,
            t.data_fetching,
            t.vkg_creation,
            t.graph_storing,
            t.total_vkg,
        ];
        for (c, v) in cols.iter_mut().zip(values) {
            c.push(v);
        }
    }
    REFERENCE_MEANS.iter().zip(cols.iter()).map(|((name, _), values)| StatSummary::of(*name, values)).collect()
}

/// Runs every question through the backend one at a time; failures are
/// recorded, not fatal.
pub async fn run_corpus(backend: &Backend, corpus: &[CorpusQuestion]) -> CorpusReport {
    let t0 = Instant::now();
    let mut records = Vec::with_capacity(corpus.len());
    for (index, q) in corpus.iter().enumerate() {
        let outcome = match backend.chat(ChatRequest::new(&q.text)).await {
            Ok(r) => CorpusOutcome::Answered {
                columns: r.columns,
                rows: r.rows,
                timings: r.timings,
                vkg_stats: r.vkg_stats,
                vkg_graph: r.vkg_graph,
                query: r.query,
            },
            Err(e) => CorpusOutcome::Failed { error: e.kind().into(), message: e.to_string() },
        };
        records.push(CorpusRecord { index, archetype: q.archetype.id(), question: q.text.clone(), outcome });
    }
    let summary = summarize(&records);
    CorpusReport { records, summary, wall_seconds: t0.elapsed().as_secs_f64() }
}

/// Runs questions concurrently, for exercising request isolation.
pub async fn run_corpus_parallel(backend: &Backend, corpus: &[CorpusQuestion]) -> CorpusReport {
    let t0 = Instant::now();
    let futures = corpus.iter().map(|q| backend.chat(ChatRequest::new(&q.text)));
    let results = futures::future::join_all(futures).await;
    let records: Vec<CorpusRecord> = corpus
        .iter()
        .zip(results)
        .enumerate()
        .map(|(index, (q, res))| CorpusRecord {
            index,
            archetype: q.archetype.id(),
            question: q.text.clone(),
            outcome: match res {
                Ok(r) => CorpusOutcome::Answered {
                    columns: r.columns,
                    rows: r.rows,
                    timings: r.timings,
                    vkg_stats: r.vkg_stats,
                    vkg_graph: r.vkg_graph,
                    query: r.query,
                },
                Err(e) => CorpusOutcome::Failed { error: e.kind().into(), message: e.to_string() },
            },
        })
        .collect();
    let summary = summarize(&records);
    CorpusReport { records, summary, wall_seconds: t0.elapsed().as_secs_f64() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triples_are_seeded() {
        let a: Vec<Triple> = random_triples(50, 3).collect();
        assert_eq!(a, random_triples(50, 3).collect::<Vec<_>>());
        assert_ne!(a, random_triples(50, 4).collect::<Vec<_>>());
        assert!(a.iter().all(|t| t.subject.as_str().starts_with(BENCH_BASE)));
    }

    #[test]
    fn memory_curves() {
        assert_eq!(memory_profile(0, 10, None, 1).unwrap(), [MemoryPoint { triples_added: 0, peak_triples: 0, peak_bytes: 0 }]);
        let plain = memory_profile(1000, 100, None, 1).unwrap();
        assert_eq!(plain.len(), 11);
        assert!(plain.windows(2).all(|w| w[0].peak_bytes < w[1].peak_bytes));
        let chunked = memory_profile(1000, 100, Some(250), 1).unwrap();
        assert!(chunked.windows(2).all(|w| w[0].peak_triples <= w[1].peak_triples));
        assert_eq!(chunked.last().unwrap().peak_triples, 250);
        assert!(memory_profile(1, 0, None, 1).is_err());
    }
}
