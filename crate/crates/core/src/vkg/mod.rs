//! Per-question virtual knowledge graph: plan from extracted entities, fetch
//! from the datalake, emit triples.

pub mod chunk;
pub mod serialize;

use std::collections::HashSet;
use std::io;

use chrono::{DateTime, Utc};
use indexmap::IndexSet;
use serde::{Deserialize, Serialize};

use crate::datalake::{Datalake, DatalakeError, JobRecord, JobSelector, ReadingBatch, ReadingQuery, TimeWindow};
use crate::entities::{canonical_node, classify, Category, EntityMap, NodeMappings, QuestionClass};
use crate::ontology::{EntityKind, OntologyError, Vocabulary, GRAPH_BASE};
use crate::rdf::{format_timestamp, Iri, Literal, Object, Triple, RDF_TYPE};
pub use chunk::{chunked_emit, BufferGauge, ChunkFile, ChunkedEmitter, TripleSink};

pub const NO_KEY_ENTITIES: &str = "No valid key_entities found";
pub const NO_JOB_OR_RANGE: &str = "Provide jobId or time range";
pub const NO_TIME_RANGE: &str = "Provide start_time and end_time";

#[derive(Debug, thiserror::Error)]
pub enum VkgError {
    #[error("{NO_KEY_ENTITIES}")]
    NoKeyEntities,
    #[error("{0}")]
    MissingTimeRange(&'static str),
    #[error("metric {0:?} has no plugin")]
    UnresolvedPlugin(String),
    #[error(transparent)]
    Datalake(#[from] DatalakeError),
    #[error(transparent)]
    Ontology(#[from] OntologyError),
    #[error("emit: {0}")]
    Io(#[from] io::Error),
}

impl VkgError {
    /// Rejections caused by the question rather than a backend.
    pub fn is_rejection(&self) -> bool {
        matches!(self, VkgError::NoKeyEntities | VkgError::MissingTimeRange(_) | VkgError::UnresolvedPlugin(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MetricPlan {
    pub plugin: String,
    pub metric: String,
    pub node: Option<String>,
    /// `None`: borrow the fetched job's interval.
    pub window: Option<TimeWindow>,
}

/// What to fetch for one question.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VkgPlan {
    pub job: Option<JobSelector>,
    pub metric: Option<MetricPlan>,
}

/// `Ok(None)` means the question is answered by the Base-KG alone.
pub fn plan_vkg(entities: &EntityMap, nm: Option<&NodeMappings>) -> Result<Option<VkgPlan>, VkgError> {
    let class = classify(entities);
    match class {
        QuestionClass::Invalid => return Err(VkgError::NoKeyEntities),
        QuestionClass::TopologyOnly => return Ok(None),
        _ => {}
    }
    let window = match entities.window() {
        Some((s, e)) => Some(TimeWindow::new(s, e)?),
        None => None,
    };
    let job = if entities.job.present {
        Some(match (entities.value(Category::Job), window) {
            (Some(id), _) => JobSelector::id(id),
            (None, Some(w)) => JobSelector::window(w),
            (None, None) => return Err(VkgError::MissingTimeRange(NO_JOB_OR_RANGE)),
        })
    } else {
        None
    };
    let metric = if entities.metric.present {
        if window.is_none() && job.is_none() {
            return Err(VkgError::MissingTimeRange(NO_TIME_RANGE));
        }
        let metric = entities.value(Category::Metric).unwrap_or_default().to_owned();
        let plugin = entities
            .value(Category::Plugin)
            .map(str::to_owned)
            .ok_or_else(|| VkgError::UnresolvedPlugin(metric.clone()))?;
        let node = entities.value(Category::Node).map(|n| canonical_node(nm, n).to_owned());
        Some(MetricPlan { plugin, metric, node, window })
    } else {
        None
    };
    Ok(Some(VkgPlan { job, metric }))
}

/// Raw rows pulled from the datalake for one plan.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Fetched {
    pub jobs: Vec<JobRecord>,
    pub readings: Option<ReadingBatch>,
}

impl Fetched {
    pub fn data_points(&self) -> u64 {
        (self.jobs.len() + self.readings.as_ref().map_or(0, ReadingBatch::len)) as u64
    }
}

pub async fn fetch(plan: &VkgPlan, lake: &dyn Datalake) -> Result<Fetched, VkgError> {
    let jobs = match &plan.job {
        Some(sel) => lake.fetch_jobs(sel).await?,
        None => Vec::new(),
    };
    let readings = match &plan.metric {
        None => None,
        Some(m) => {
            let window = match (m.window, jobs.first()) {
                (Some(w), _) => Some(w),
                (None, Some(j)) => Some(TimeWindow::new(j.start_time, j.end_time)?),
                // job id matched nothing: no interval to read
                (None, None) => None,
            };
            match window {
                Some(w) => Some(
                    lake.fetch_readings(&ReadingQuery {
                        metric: m.metric.clone(),
                        plugin: m.plugin.clone(),
                        node: m.node.clone(),
                        start: w.start(),
                        end: w.end(),
                    })
                    .await?,
                ),
                None => Some(ReadingBatch { plugin: m.plugin.clone(), metric: m.metric.clone(), ..Default::default() }),
            }
        }
    };
    Ok(Fetched { jobs, readings })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmitOptions {
    /// Adds `rdf:type oda:Reading` per reading (5 triples instead of 4).
    pub emit_reading_type: bool,
}

struct Terms {
    rdf_type: Iri,
    job_class: Iri,
    sensor_class: Iri,
    reading_class: Iri,
    job_id: Iri,
    start_time: Iri,
    end_time: Iri,
    used_node: Iri,
    has_plugin: Iri,
    has_sensor: Iri,
    metric_name: Iri,
    has_reading: Iri,
    value: Iri,
    timestamp: Iri,
    unit: Iri,
}

impl Terms {
    fn new(v: &Vocabulary) -> Result<Self, OntologyError> {
        Ok(Self {
            rdf_type: Iri::new_unchecked(RDF_TYPE.to_owned()),
            job_class: v.term("Job")?,
            sensor_class: v.term("Sensor")?,
            reading_class: v.term("Reading")?,
            job_id: v.term("jobId")?,
            start_time: v.term("startTime")?,
            end_time: v.term("endTime")?,
            used_node: v.term("usedNode")?,
            has_plugin: v.term("hasPlugin")?,
            has_sensor: v.term("hasSensor")?,
            metric_name: v.term("metricName")?,
            has_reading: v.term("hasReading")?,
            value: v.term("value")?,
            timestamp: v.term("timestamp")?,
            unit: v.term("unit")?,
        })
    }
}

/// Streams the triples for `fetched` into `sink`; returns the count.
///
/// Per job: type, jobId, startTime, endTime and one usedNode per node.
/// Per node with readings: one hasPlugin, then three sensor triples (type,
/// metricName, hasSensor). Per reading: hasReading, value, timestamp, unit.
pub fn emit(
    vocab: &Vocabulary,
    fetched: &Fetched,
    nm: Option<&NodeMappings>,
    opts: EmitOptions,
    sink: &mut dyn TripleSink,
) -> Result<u64, VkgError> {
    let t = Terms::new(vocab)?;
    let mut n = 0u64;
    let mut put = |s: &Iri, p: &Iri, o: Object| -> io::Result<()> {
        n += 1;
        sink.push(Triple { subject: s.clone(), predicate: p.clone(), object: o })
    };
    for job in &fetched.jobs {
        let j = vocab.iri_for(EntityKind::Job, &[&job.job_id])?;
        put(&j, &t.rdf_type, t.job_class.clone().into())?;
        put(&j, &t.job_id, Literal::string(&job.job_id).into())?;
        put(&j, &t.start_time, Literal::date_time(job.start_time).into())?;
        put(&j, &t.end_time, Literal::date_time(job.end_time).into())?;
        for node in &job.nodes {
            let node = vocab.iri_for(EntityKind::Node, &[canonical_node(nm, node)])?;
            put(&j, &t.used_node, node.into())?;
        }
    }
    if let Some(batch) = &fetched.readings {
        let unit = Literal::string(&batch.unit);
        for (raw_node, rows) in batch.node_runs() {
            let node_name = canonical_node(nm, raw_node);
            let node = vocab.iri_for(EntityKind::Node, &[node_name])?;
            let plugin = vocab.iri_for(EntityKind::Plugin, &[node_name, &batch.plugin])?;
            let sensor = vocab.iri_for(EntityKind::Sensor, &[node_name, &batch.plugin, &batch.metric])?;
            put(&node, &t.has_plugin, plugin.clone().into())?;
            put(&sensor, &t.rdf_type, t.sensor_class.clone().into())?;
            put(&sensor, &t.metric_name, Literal::string(&batch.metric).into())?;
            put(&plugin, &t.has_sensor, sensor.clone().into())?;
            for i in rows {
                let ts: DateTime<Utc> = batch.timestamp[i];
                let stamp = format_timestamp(ts);
                let r = vocab.iri_for(EntityKind::Reading, &[node_name, &batch.plugin, &batch.metric, &stamp])?;
                put(&sensor, &t.has_reading, r.clone().into())?;
                if opts.emit_reading_type {
                    put(&r, &t.rdf_type, t.reading_class.clone().into())?;
                }
                put(&r, &t.value, Literal::double(batch.value[i]).into())?;
                put(&r, &t.timestamp, Literal::date_time(ts).into())?;
                put(&r, &t.unit, unit.clone().into())?;
            }
        }
    }
    Ok(n)
}

/// Closed-form triple count for `fetched`.
pub fn expected_triples(fetched: &Fetched, opts: EmitOptions) -> u64 {
    let jobs: u64 = fetched.jobs.iter().map(|j| 4 + j.nodes.len() as u64).sum();
    let readings = fetched.readings.as_ref().map_or(0, |b| {
        let nodes = b.node_runs().count() as u64;
        let per = if opts.emit_reading_type { 5 } else { 4 };
        4 * nodes + per * b.len() as u64
    });
    jobs + readings
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VkgStats {
    pub triple_count: u64,
    /// Distinct IRIs in subject or object position.
    pub node_count: u64,
    pub data_points_fetched: u64,
    pub serialized_bytes: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vkg {
    pub graph_iri: Iri,
    pub triples: Vec<Triple>,
    pub stats: VkgStats,
}

impl Vkg {
    /// Serializes as N-Triples and records the byte count in the stats.
    pub fn to_ntriples(&mut self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.triples.len() * 120);
        let n = serialize::write_ntriples(&self.triples, &mut out).expect("writes to Vec never fail");
        self.stats.serialized_bytes = n;
        out
    }
}

pub fn count_iri_nodes(triples: &[Triple]) -> u64 {
    let mut seen: HashSet<&str> = HashSet::with_capacity(triples.len());
    for t in triples {
        seen.insert(t.subject.as_str());
        if let Object::Iri(o) = &t.object {
            seen.insert(o.as_str());
        }
    }
    seen.len() as u64
}

/// Buffered collects into a list; Incremental inserts each triple into a
/// graph-like set as it is produced.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssemblyMode {
    #[default]
    Buffered,
    Incremental,
}

pub fn new_graph_iri() -> Iri {
    Iri::new_unchecked(format!("{GRAPH_BASE}vkg/{}", uuid::Uuid::new_v4()))
}

pub fn assemble(
    vocab: &Vocabulary,
    fetched: &Fetched,
    nm: Option<&NodeMappings>,
    graph_iri: Iri,
    mode: AssemblyMode,
    opts: EmitOptions,
) -> Result<Vkg, VkgError> {
    let triples = match mode {
        AssemblyMode::Buffered => {
            let mut v = Vec::with_capacity(expected_triples(fetched, opts) as usize);
            emit(vocab, fetched, nm, opts, &mut v)?;
            v
        }
        AssemblyMode::Incremental => {
            let mut set = IndexSet::new();
            emit(vocab, fetched, nm, opts, &mut set)?;
            set.into_iter().collect()
        }
    };
    let stats = VkgStats {
        triple_count: triples.len() as u64,
        node_count: count_iri_nodes(&triples),
        data_points_fetched: fetched.data_points(),
        serialized_bytes: 0,
    };
    Ok(Vkg { graph_iri, triples, stats })
}

#[derive(Debug)]
pub enum VkgOutcome {
    Skipped,
    Built(Vkg),
}

/// Plan, fetch and assemble in one call.
pub async fn build_vkg(
    entities: &EntityMap,
    lake: &dyn Datalake,
    vocab: &Vocabulary,
    nm: Option<&NodeMappings>,
) -> Result<VkgOutcome, VkgError> {
    let Some(plan) = plan_vkg(entities, nm)? else {
        return Ok(VkgOutcome::Skipped);
    };
    let fetched = fetch(&plan, lake).await?;
    let vkg = assemble(vocab, &fetched, nm, new_graph_iri(), AssemblyMode::Buffered, EmitOptions::default())?;
    Ok(VkgOutcome::Built(vkg))
}
