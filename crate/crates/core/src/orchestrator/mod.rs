//! Request pipeline: extraction, then VKG build and SPARQL generation in
//! parallel, then refinement and execution.

pub mod http;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use crate::config::AppConfig;
use crate::datalake::{Datalake, DatalakeConfig, DatalakeError};
use crate::entities::{extract_entities, EntityMap, ExtractError, Metadata};
use crate::ontology::{build_base_kg, load_topology_csv, OntologyError, TopologyRecord, Vocabulary};
use crate::query_pipeline::{execute, QueryError, RefinementReport, Refiner, RuleId};
use crate::rdf::Iri;
use crate::sparql::llm::GenerationMode;
use crate::sparql::{default_fewshots, GeneratedQuery, LlmClient, LlmGenerator, QueryGenerator, SparqlError, TemplateGenerator};
use crate::store::{base_kg_graph, GraphHistory, GraphStore, QueryResult, StoreError, Term};
use crate::vkg::serialize::write_ntriples;
use crate::vkg::{assemble, chunked_emit, fetch, new_graph_iri, plan_vkg, VkgError, VkgPlan, VkgStats};

pub const PREVIEW_THRESHOLD: usize = 50;
pub const PREVIEW_ROWS: usize = 5;
pub const RESULT_TTL: Duration = Duration::from_secs(600);

#[derive(Debug, thiserror::Error)]
pub enum ChatError {
    #[error("no dataset selected")]
    NoDatasetSelected,
    #[error("{0}")]
    InvalidRequest(String),
    /// The question itself cannot be answered; carries the user-facing text.
    #[error("{0}")]
    Rejected(String),
    #[error("datalake unavailable: {0}")]
    DatalakeUnavailable(String),
    #[error("graph store: {0}")]
    Store(#[from] StoreError),
    #[error("query generation: {0}")]
    Generation(SparqlError),
    #[error("{0}")]
    Query(QueryError),
    #[error("result {0} expired or unknown")]
    ResultExpired(String),
    #[error("{0}")]
    Internal(String),
}

impl ChatError {
    /// Rejections are the caller's fault (4xx); everything else is a
    /// backend failure.
    pub fn is_rejection(&self) -> bool {
        matches!(
            self,
            ChatError::InvalidRequest(_)
                | ChatError::Rejected(_)
                | ChatError::NoDatasetSelected
                | ChatError::ResultExpired(_)
                | ChatError::Query(QueryError::RefusedUnresolved(_) | QueryError::Unrefinable)
        )
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ChatError::NoDatasetSelected => "no_dataset_selected",
            ChatError::InvalidRequest(_) => "invalid_request",
            ChatError::Rejected(_) => "rejected",
            ChatError::DatalakeUnavailable(_) => "datalake_unavailable",
            ChatError::Store(_) => "store_unavailable",
            ChatError::Generation(_) => "generation_failed",
            ChatError::Query(QueryError::Store(_)) => "store_unavailable",
            ChatError::Query(_) => "refinement_failed",
            ChatError::ResultExpired(_) => "result_expired",
            ChatError::Internal(_) => "internal",
        }
    }
}

impl From<VkgError> for ChatError {
    fn from(e: VkgError) -> Self {
        match e {
            e if e.is_rejection() => ChatError::Rejected(e.to_string()),
            VkgError::Datalake(DatalakeError::UnknownMetric { .. } | DatalakeError::InvalidWindow { .. }) => {
                ChatError::Rejected(e.to_string())
            }
            VkgError::Datalake(d) => ChatError::DatalakeUnavailable(d.to_string()),
            e => ChatError::Internal(e.to_string()),
        }
    }
}

impl From<SparqlError> for ChatError {
    fn from(e: SparqlError) -> Self {
        match e {
            SparqlError::UnsupportedArchetype | SparqlError::MissingParameter(_) => ChatError::Rejected(e.to_string()),
            e => ChatError::Generation(e),
        }
    }
}

impl From<QueryError> for ChatError {
    fn from(e: QueryError) -> Self {
        match e {
            QueryError::Store(s) => ChatError::Store(s),
            e => ChatError::Query(e),
        }
    }
}

impl From<ExtractError> for ChatError {
    fn from(e: ExtractError) -> Self {
        ChatError::Rejected(e.to_string())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChatOptions {
    pub mode: Option<GenerationMode>,
    pub limit: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub question: String,
    #[serde(default)]
    pub options: ChatOptions,
}

impl ChatRequest {
    pub fn new(question: impl Into<String>) -> Self {
        Self { question: question.into(), options: ChatOptions::default() }
    }
}

/// Per-stage wall-clock durations in seconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingBreakdown {
    pub entities_extraction: f64,
    pub data_fetching: f64,
    pub vkg_creation: f64,
    pub graph_storing: f64,
    pub total_vkg: f64,
    pub llm_inference: f64,
    pub qr: f64,
    pub qe: f64,
    pub end_to_end: f64,
}

impl TimingBreakdown {
    /// The VKG rows as (name, seconds).
    pub fn vkg_rows(&self) -> [(&'static str, f64); 5] {
        [
            ("entities_extraction", self.entities_extraction),
            ("data_fetching", self.data_fetching),
            ("vkg_creation", self.vkg_creation),
            ("graph_storing", self.graph_storing),
            ("total_vkg", self.total_vkg),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementSummary {
    pub applied: Vec<RuleId>,
    pub unresolved: Vec<String>,
    pub changed: bool,
}

impl From<&RefinementReport> for RefinementSummary {
    fn from(r: &RefinementReport) -> Self {
        Self { applied: r.applied.clone(), unresolved: r.unresolved.clone(), changed: r.input != r.output }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub id: String,
    pub question: String,
    pub query: String,
    pub archetype: Option<u8>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub preview: Vec<Vec<String>>,
    pub total_rows: usize,
    pub csv_url: String,
    pub timings: TimingBreakdown,
    pub vkg_stats: Option<VkgStats>,
    pub vkg_graph: Option<String>,
    pub refinement: RefinementSummary,
}

/// The rows the frontend shows inline: all of them up to the threshold,
/// otherwise the first few.
pub fn preview_rows<T: Clone>(rows: &[T]) -> Vec<T> {
    if rows.len() > PREVIEW_THRESHOLD {
        rows[..PREVIEW_ROWS].to_vec()
    } else {
        rows.to_vec()
    }
}

fn lexical_rows(result: &QueryResult) -> Vec<Vec<String>> {
    result
        .rows
        .iter()
        .map(|r| r.iter().map(|t| if matches!(t, Term::Unbound) { String::new() } else { t.lexical().to_owned() }).collect())
        .collect()
}

pub fn to_csv(columns: &[String], rows: &[Vec<String>]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    w.write_record(columns).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Artificial per-stage latency, for exercising the concurrency contract.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StageDelays {
    pub vkg: Duration,
    pub llm: Duration,
    pub qe: Duration,
}

struct ActiveDataset {
    config: DatalakeConfig,
    lake: Arc<dyn Datalake>,
    metadata: Metadata,
}

struct CachedResult {
    created: Instant,
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetAck {
    pub status: String,
    pub subset: String,
    pub base_kg_triples: u64,
    /// False when the topology was already loaded.
    pub uploaded: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
    pub dataset: Option<String>,
    pub store: bool,
    pub datalake: Option<bool>,
    pub llm: Option<bool>,
}

#[derive(Default)]
struct VkgBranch {
    data_fetching: Duration,
    vkg_creation: Duration,
    graph_storing: Duration,
    graph: Option<Iri>,
    stats: Option<VkgStats>,
}

pub struct Backend {
    config: AppConfig,
    vocab: Vocabulary,
    store: Arc<dyn GraphStore>,
    template: TemplateGenerator,
    llm: Option<LlmGenerator>,
    refiner: Refiner,
    history: GraphHistory,
    dataset: RwLock<Option<Arc<ActiveDataset>>>,
    base_topology: tokio::sync::Mutex<Option<Vec<TopologyRecord>>>,
    results: Mutex<HashMap<String, CachedResult>>,
    delays: StageDelays,
}

impl Backend {
    pub fn new(config: AppConfig) -> Result<Self, ChatError> {
        let store = config.store.open()?;
        Self::with_store(config, store)
    }

    pub fn with_store(config: AppConfig, store: Arc<dyn GraphStore>) -> Result<Self, ChatError> {
        let vocab = Vocabulary::oda();
        let llm = match (&config.llm.endpoint, config.llm.mode) {
            (Some(_), _) => {
                let client = LlmClient::from_config(&config.llm).map_err(ChatError::Generation)?;
                Some(LlmGenerator::new(client, &vocab, default_fewshots(), config.llm.fewshot_k).map_err(ChatError::Generation)?)
            }
            (None, GenerationMode::Llm) => {
                return Err(ChatError::InvalidRequest("llm mode requires llm.endpoint".into()));
            }
            (None, GenerationMode::Template) => None,
        };
        Ok(Self {
            refiner: Refiner::new(vocab.clone(), &config.qr),
            template: TemplateGenerator::new(vocab.clone()),
            history: GraphHistory::new(config.store.keep_last_n),
            vocab,
            store,
            llm,
            config,
            dataset: RwLock::new(None),
            base_topology: tokio::sync::Mutex::new(None),
            results: Mutex::new(HashMap::new()),
            delays: StageDelays::default(),
        })
    }

    pub fn with_delays(mut self, delays: StageDelays) -> Self {
        self.delays = delays;
        self
    }

    pub fn config(&self) -> &AppConfig {
        &self.config
    }

    pub fn store(&self) -> &Arc<dyn GraphStore> {
        &self.store
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn selected_dataset(&self) -> Option<DatalakeConfig> {
        self.dataset.read().unwrap().as_ref().map(|d| d.config.clone())
    }

    /// Selects the datalake for subsequent chats and (re)loads the Base-KG
    /// when the topology changed.
    pub async fn select_dataset(&self, ds: DatalakeConfig) -> Result<DatasetAck, ChatError> {
        ds.validate().map_err(|e| ChatError::InvalidRequest(e.to_string()))?;
        let current = self.dataset.read().unwrap().clone();
        if let Some(cur) = current.filter(|c| c.config == ds) {
            let n = self.base_topology.lock().await.as_ref().map_or(0, |t| base_kg_size(t));
            return Ok(DatasetAck { status: "ok".into(), subset: cur.config.subset.clone(), base_kg_triples: n, uploaded: false });
        }

        let lake = ds.open().map_err(|e| ChatError::DatalakeUnavailable(e.to_string()))?;
        lake.ping().await.map_err(|e| ChatError::DatalakeUnavailable(e.to_string()))?;
        let missing = |what: &str| ChatError::InvalidRequest(format!("no {what} path for this dataset; set {what}_path"));
        let topo_path = self.config.topology_for(&ds).ok_or_else(|| missing("topology"))?;
        let meta_path = self.config.metadata_for(&ds).ok_or_else(|| missing("metadata"))?;
        let (topology, metadata) = tokio::task::spawn_blocking(move || load_context(topo_path, meta_path))
            .await
            .map_err(|e| ChatError::Internal(e.to_string()))??;

        let mut loaded = self.base_topology.lock().await;
        let uploaded = loaded.as_deref() != Some(topology.as_slice());
        if uploaded {
            let triples = build_base_kg(&self.vocab, &topology).map_err(|e| ChatError::InvalidRequest(e.to_string()))?;
            let mut body = Vec::with_capacity(triples.len() * 100);
            write_ntriples(&triples, &mut body).map_err(|e| ChatError::Internal(e.to_string()))?;
            let base = base_kg_graph();
            self.store.delete_graph(&base).await?;
            self.store.upload(&base, body).await?;
            *loaded = Some(topology.clone());
        }
        let n = base_kg_size(&topology);
        *self.dataset.write().unwrap() = Some(Arc::new(ActiveDataset { config: ds.clone(), lake, metadata }));
        Ok(DatasetAck { status: "ok".into(), subset: ds.subset, base_kg_triples: n, uploaded })
    }

    fn active(&self) -> Result<Arc<ActiveDataset>, ChatError> {
        self.dataset.read().unwrap().clone().ok_or(ChatError::NoDatasetSelected)
    }

    fn generator(&self, mode: Option<GenerationMode>) -> Result<&dyn QueryGenerator, ChatError> {
        match mode.unwrap_or(self.config.llm.mode) {
            GenerationMode::Template => Ok(&self.template),
            GenerationMode::Llm => self
                .llm
                .as_ref()
                .map(|g| g as &dyn QueryGenerator)
                .ok_or_else(|| ChatError::InvalidRequest("no LLM endpoint configured".into())),
        }
    }

    pub async fn chat(&self, req: ChatRequest) -> Result<ChatResponse, ChatError> {
        let t0 = Instant::now();
        if req.question.trim().is_empty() {
            return Err(ChatError::InvalidRequest("question must be non-empty".into()));
        }
        let ds = self.active()?;
        let generator = self.generator(req.options.mode)?;
        let nm = ds.metadata.node_mappings();

        let t = Instant::now();
        let entities = extract_entities(&req.question, &ds.metadata.metrics, nm)?;
        let plan = plan_vkg(&entities, nm)?;
        let extraction = t.elapsed();
        debug!(?entities, ?plan, "planned");

        let (vkg, generated) = tokio::join!(
            self.vkg_branch(plan.as_ref(), &ds),
            self.generation_branch(generator, &req.question, &entities)
        );
        let vkg = vkg?;
        let (generated, llm_inference) = generated;
        let generated = generated?;

        let t = Instant::now();
        let report = self.refiner.refine(&generated.raw)?;
        let qr = t.elapsed();

        let mut graphs = vec![base_kg_graph()];
        graphs.extend(vkg.graph.clone());
        let t = Instant::now();
        if !self.delays.qe.is_zero() {
            tokio::time::sleep(self.delays.qe).await;
        }
        let (result, _) = execute(&report, self.store.as_ref(), &graphs).await?;
        let qe = t.elapsed();

        if vkg.graph.is_some() {
            if let Err(e) = self.history.evict(self.store.as_ref()).await {
                warn!("graph eviction failed: {e}");
            }
        }

        let columns = result.variables.clone();
        let mut rows = lexical_rows(&result);
        if let Some(limit) = req.options.limit {
            rows.truncate(limit);
        }
        let id = uuid::Uuid::new_v4().to_string();
        let secs = |d: Duration| d.as_secs_f64();
        let mut timings = TimingBreakdown {
            entities_extraction: secs(extraction),
            data_fetching: secs(vkg.data_fetching),
            vkg_creation: secs(vkg.vkg_creation),
            graph_storing: secs(vkg.graph_storing),
            total_vkg: 0.0,
            llm_inference: secs(llm_inference),
            qr: secs(qr),
            qe: secs(qe),
            end_to_end: 0.0,
        };
        timings.total_vkg = timings.entities_extraction + timings.data_fetching + timings.vkg_creation + timings.graph_storing;

        let response = ChatResponse {
            csv_url: format!("/api/result/{id}.csv"),
            id: id.clone(),
            question: req.question,
            query: report.output.clone(),
            archetype: generated.archetype.map(|a| a.id()),
            preview: preview_rows(&rows),
            total_rows: rows.len(),
            columns: columns.clone(),
            rows: rows.clone(),
            timings,
            vkg_stats: vkg.stats,
            vkg_graph: vkg.graph.map(Iri::into_string),
            refinement: RefinementSummary::from(&report),
        };
        self.cache_result(id, columns, rows);
        let mut response = response;
        response.timings.end_to_end = secs(t0.elapsed());
        Ok(response)
    }

    async fn generation_branch(
        &self,
        generator: &dyn QueryGenerator,
        question: &str,
        entities: &EntityMap,
    ) -> (Result<GeneratedQuery, ChatError>, Duration) {
        let t = Instant::now();
        if !self.delays.llm.is_zero() {
            tokio::time::sleep(self.delays.llm).await;
        }
        let out = generator.generate(question, entities).await.map_err(ChatError::from);
        (out, t.elapsed())
    }

    async fn vkg_branch(&self, plan: Option<&VkgPlan>, ds: &ActiveDataset) -> Result<VkgBranch, ChatError> {
        let Some(plan) = plan else {
            return Ok(VkgBranch::default());
        };
        let nm = ds.metadata.node_mappings();
        let t = Instant::now();
        if !self.delays.vkg.is_zero() {
            tokio::time::sleep(self.delays.vkg).await;
        }
        let fetched = fetch(plan, ds.lake.as_ref()).await?;
        let data_fetching = t.elapsed();

        let t = Instant::now();
        let graph = new_graph_iri();
        let opts = self.config.vkg.emit_options();
        let mut vkg = assemble(&self.vocab, &fetched, nm, graph.clone(), self.config.vkg.assembly, opts)?;
        let payload = match self.config.vkg.chunk_batch {
            None => Payload::Whole(vkg.to_ntriples()),
            Some(batch) => {
                let dir = tempfile::tempdir().map_err(|e| ChatError::Internal(e.to_string()))?;
                let triples = std::mem::take(&mut vkg.triples);
                let (chunks, _) = chunked_emit(triples, dir.path(), &graph, batch).map_err(|e| ChatError::Internal(e.to_string()))?;
                vkg.stats.serialized_bytes = chunks.iter().map(|c| c.bytes).sum();
                Payload::Chunks(dir, chunks.into_iter().map(|c| c.path).collect())
            }
        };
        let vkg_creation = t.elapsed();

        let t = Instant::now();
        match payload {
            Payload::Whole(body) => self.store.upload(&graph, body).await?,
            Payload::Chunks(_dir, paths) => self.store.upload_chunks(&graph, &paths).await?,
        };
        self.history.record(graph.clone());
        let graph_storing = t.elapsed();

        Ok(VkgBranch { data_fetching, vkg_creation, graph_storing, graph: Some(graph), stats: Some(vkg.stats) })
    }

    fn cache_result(&self, id: String, columns: Vec<String>, rows: Vec<Vec<String>>) {
        let mut cache = self.results.lock().unwrap();
        cache.retain(|_, r| r.created.elapsed() < RESULT_TTL);
        cache.insert(id, CachedResult { created: Instant::now(), columns, rows });
    }

    pub fn export_csv(&self, id: &str) -> Result<Vec<u8>, ChatError> {
        let cache = self.results.lock().unwrap();
        match cache.get(id) {
            Some(r) if r.created.elapsed() < RESULT_TTL => Ok(to_csv(&r.columns, &r.rows)),
            _ => Err(ChatError::ResultExpired(id.to_owned())),
        }
    }

    pub async fn health(&self) -> Health {
        let ds = self.dataset.read().unwrap().clone();
        let datalake = match &ds {
            Some(d) => Some(d.lake.ping().await.is_ok()),
            None => None,
        };
        let llm = match &self.llm {
            Some(g) => Some(g.client().ping().await),
            None => None,
        };
        Health {
            status: "ok".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            dataset: ds.map(|d| d.config.subset.clone()),
            store: self.store.ping().await.is_ok(),
            datalake,
            llm,
        }
    }

    /// Subsets found under the configured data root.
    pub fn local_datasets(&self) -> Vec<String> {
        self.config.data_root.as_deref().map(crate::datalake::synth::local_subsets).unwrap_or_default()
    }
}

enum Payload {
    Whole(Vec<u8>),
    Chunks(tempfile::TempDir, Vec<PathBuf>),
}

fn base_kg_size(topology: &[TopologyRecord]) -> u64 {
    let racks: std::collections::HashSet<&str> = topology.iter().map(|r| r.rack_id.as_str()).collect();
    (2 * racks.len() + 4 * topology.len()) as u64
}

fn load_context(topology: PathBuf, metadata: PathBuf) -> Result<(Vec<TopologyRecord>, Metadata), ChatError> {
    let topo = load_topology_csv(&topology).map_err(|e: OntologyError| {
        ChatError::DatalakeUnavailable(format!("topology {}: {e}", topology.display()))
    })?;
    let meta = Metadata::load(&metadata)
        .map_err(|e| ChatError::DatalakeUnavailable(format!("metadata {}: {e}", metadata.display())))?;
    Ok((topo, meta))
}
