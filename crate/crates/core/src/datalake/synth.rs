//! Seeded synthetic telemetry month, written in the columnar layout together
//! with topology, sensor metadata and a manifest the test oracles read.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Datelike, Duration, NaiveDate, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::columnar::{jobs_path, readings_path, write_jobs, write_readings};
use super::JobRecord;
use crate::entities::Metadata;
use crate::ontology::{write_topology_csv, TopologyRecord};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parquet: {0}")]
    Parquet(#[from] parquet::errors::ParquetError),
    #[error("topology: {0}")]
    Topology(#[from] crate::ontology::OntologyError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub plugin: String,
    pub metric: String,
    pub unit: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub nodes: usize,
    pub racks: usize,
    pub jobs: usize,
    pub metrics: Vec<MetricSpec>,
    pub cadence_secs: u32,
    /// `YYYY-MM`.
    pub month: String,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            nodes: 8,
            racks: 2,
            jobs: 50,
            metrics: vec![MetricSpec { plugin: "ipmi".into(), metric: "total_power".into(), unit: "W".into() }],
            cadence_secs: 20,
            month: "2022-02".into(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.to_owned()));
        if self.nodes == 0 || self.racks == 0 || self.jobs == 0 {
            return bad("nodes, racks and jobs must be positive");
        }
        if self.racks > self.nodes {
            return bad("more racks than nodes");
        }
        if self.cadence_secs == 0 {
            return bad("cadence must be positive");
        }
        if self.metrics.is_empty() {
            return bad("at least one metric");
        }
        let mut names = std::collections::HashSet::new();
        for m in &self.metrics {
            if m.plugin.is_empty() || m.metric.is_empty() || !names.insert(m.metric.to_lowercase()) {
                return bad("metric names must be non-empty and unique");
            }
        }
        self.month_bounds().map(|_| ())
    }

    /// `[first instant of month, first instant of next month)`.
    pub fn month_bounds(&self) -> Result<(DateTime<Utc>, DateTime<Utc>), SynthError> {
        let first = NaiveDate::parse_from_str(&format!("{}-01", self.month), "%Y-%m-%d")
            .map_err(|_| SynthError::InvalidSpec(format!("month {:?} is not YYYY-MM", self.month)))?;
        let next = if first.month() == 12 {
            NaiveDate::from_ymd_opt(first.year() + 1, 1, 1)
        } else {
            NaiveDate::from_ymd_opt(first.year(), first.month() + 1, 1)
        }
        .expect("valid date");
        let at = |d: NaiveDate| Utc.from_utc_datetime(&d.and_hms_opt(0, 0, 0).expect("midnight"));
        Ok((at(first), at(next)))
    }

    /// Subset id derived from the month: `2022-02` → `22-02`.
    pub fn subset_id(&self) -> String {
        self.month.get(2..).unwrap_or(&self.month).to_owned()
    }

    pub fn node_name(i: usize) -> String {
        format!("node{i:02}")
    }

    pub fn rack_name(k: usize) -> String {
        format!("r{}", 200 + k)
    }
}

/// Everything the oracles need without opening the parquet files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub spec: SynthSpec,
    pub subset: String,
    pub month_start: DateTime<Utc>,
    pub month_end: DateTime<Utc>,
    pub racks: BTreeMap<String, Vec<String>>,
    /// `plugin/metric` → node → row count.
    pub reading_rows: BTreeMap<String, BTreeMap<String, u64>>,
    pub jobs: BTreeMap<String, Vec<String>>,
}

impl Manifest {
    pub fn job_count(&self) -> usize {
        self.jobs.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

#[derive(Clone, Debug)]
pub struct SynthDataset {
    pub root: PathBuf,
    pub subset: String,
    pub topology_path: PathBuf,
    pub metadata_path: PathBuf,
    pub manifest_path: PathBuf,
    pub manifest: Manifest,
}

/// Topology: node `i` sits in rack `i % R` at position `i / R`.
pub fn topology(spec: &SynthSpec) -> Vec<TopologyRecord> {
    (0..spec.nodes)
        .map(|i| TopologyRecord {
            rack_id: SynthSpec::rack_name(i % spec.racks),
            node_name: SynthSpec::node_name(i),
            position: (i / spec.racks) as u32,
        })
        .collect()
}

fn gen_jobs(rng: &mut ChaCha8Rng, spec: &SynthSpec, start: DateTime<Utc>, end: DateTime<Utc>) -> Vec<JobRecord> {
    let span = (end - start).num_seconds();
    (0..spec.jobs)
        .map(|i| {
            let dur = rng.random_range(600..=12 * 3600i64);
            let s = rng.random_range(0..span - 600);
            let e = (s + dur).min(span);
            let k = rng.random_range(1..=spec.nodes.min(4));
            let mut picks = rand::seq::index::sample(rng, spec.nodes, k).into_vec();
            picks.sort_unstable();
            JobRecord {
                job_id: (100_000 + i).to_string(),
                start_time: start + Duration::seconds(s),
                end_time: start + Duration::seconds(e),
                nodes: picks.into_iter().map(SynthSpec::node_name).collect(),
            }
        })
        .collect()
}

pub fn generate_synthetic(root: &Path, seed: u64, spec: &SynthSpec) -> Result<SynthDataset, SynthError> {
    spec.validate()?;
    let (start, end) = spec.month_bounds()?;
    let subset = spec.subset_id();
    let subset_dir = root.join(&subset);
    std::fs::create_dir_all(&subset_dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let topo = topology(spec);
    let topology_path = root.join("topology.csv");
    write_topology_csv(&topology_path, &topo)?;
    let mut racks: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for r in &topo {
        racks.entry(r.rack_id.clone()).or_default().push(r.node_name.clone());
    }

    let mut plugins: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    for m in &spec.metrics {
        plugins.entry(m.plugin.clone()).or_default().insert(m.metric.clone(), m.unit.clone());
    }
    let metadata_path = root.join("metadata.json");
    std::fs::write(&metadata_path, Metadata::to_json(&plugins, &BTreeMap::new()))?;

    let jobs = gen_jobs(&mut rng, spec, start, end);
    write_jobs(&jobs_path(root, &subset), &jobs)?;

    let step = i64::from(spec.cadence_secs) * 1000;
    let per_node = ((end - start).num_milliseconds() + step - 1) / step;
    let mut reading_rows = BTreeMap::new();
    for m in &spec.metrics {
        std::fs::create_dir_all(subset_dir.join(&m.plugin))?;
        let rows = spec.nodes * per_node as usize;
        let (mut ts, mut node, mut value) = (Vec::with_capacity(rows), Vec::with_capacity(rows), Vec::with_capacity(rows));
        let mut counts = BTreeMap::new();
        for i in 0..spec.nodes {
            let name = SynthSpec::node_name(i);
            let base = rng.random_range(150..350) as f64;
            for k in 0..per_node {
                ts.push(start.timestamp_millis() + k * step);
                node.push(name.clone());
                value.push(base + rng.random_range(0..200) as f64);
            }
            counts.insert(name, per_node as u64);
        }
        write_readings(&readings_path(root, &subset, &m.plugin, &m.metric), &m.unit, &ts, &node, &value)?;
        reading_rows.insert(format!("{}/{}", m.plugin, m.metric), counts);
    }

    let manifest = Manifest {
        seed,
        spec: spec.clone(),
        subset: subset.clone(),
        month_start: start,
        month_end: end,
        racks,
        reading_rows,
        jobs: jobs.into_iter().map(|j| (j.job_id, j.nodes)).collect(),
    };
    let manifest_path = subset_dir.join("manifest.json");
    std::fs::write(&manifest_path, manifest.to_json())?;
    Ok(SynthDataset { root: root.to_owned(), subset, topology_path, metadata_path, manifest_path, manifest })
}

/// Subset directories under `root` that carry a manifest.
pub fn local_subsets(root: &Path) -> Vec<String> {
    let Ok(rd) = std::fs::read_dir(root) else {
        return Vec::new();
    };
    let mut out: Vec<String> = rd
        .filter_map(Result::ok)
        .filter(|e| e.path().join("manifest.json").is_file() || e.path().join("jobs.parquet").is_file())
        .filter_map(|e| e.file_name().into_string().ok())
        .collect();
    out.sort();
    out
}
