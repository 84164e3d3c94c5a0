//! Brute-force answers computed straight from the files on disk, sharing no
//! code with the pipeline.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::path::Path;

use chrono::{DateTime, TimeZone, Utc};
use parquet::file::reader::{FileReader, SerializedFileReader};
use parquet::record::{Field, List};

use oda_core::bench::CorpusQuestion;
use oda_core::sparql::Archetype;

pub struct Job {
    pub id: String,
    pub start: i64,
    pub end: i64,
    pub nodes: Vec<String>,
}

pub struct Reading {
    pub ts: i64,
    pub node: String,
    pub value: f64,
}

pub struct Oracle {
    /// (rack, node, position)
    pub topology: Vec<(String, String, u32)>,
    pub jobs: Vec<Job>,
    /// metric name → readings
    pub readings: BTreeMap<String, Vec<Reading>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expected {
    /// Exact, in result order.
    Rows(Vec<Vec<String>>),
    /// One row of numbers, compared to 1e-9 relative.
    Numbers(Vec<f64>),
}

fn millis(f: &Field) -> i64 {
    match f {
        Field::TimestampMillis(v) | Field::Long(v) => *v,
        other => panic!("unexpected timestamp field {other:?}"),
    }
}

fn string(f: &Field) -> String {
    match f {
        Field::Str(s) => s.clone(),
        other => panic!("unexpected string field {other:?}"),
    }
}

fn list(f: &Field) -> Vec<String> {
    match f {
        Field::ListInternal(l) => List::elements(l).iter().map(string).collect(),
        Field::Null => Vec::new(),
        other => vec![string(other)],
    }
}

fn rows(path: &Path) -> Vec<Vec<(String, Field)>> {
    let reader = SerializedFileReader::new(File::open(path).unwrap()).unwrap();
    reader
        .get_row_iter(None)
        .unwrap()
        .map(|r| r.unwrap().get_column_iter().map(|(n, f)| (n.clone(), f.clone())).collect())
        .collect()
}

fn col<'a>(row: &'a [(String, Field)], name: &str) -> &'a Field {
    &row.iter().find(|(n, _)| n == name).unwrap_or_else(|| panic!("column {name}")).1
}

fn ms(t: DateTime<Utc>) -> i64 {
    t.timestamp_millis()
}

impl Oracle {
    pub fn load(root: &Path, subset: &str, metrics: &[(String, String)]) -> Self {
        let mut rdr = csv::Reader::from_path(root.join("topology.csv")).unwrap();
        let headers = rdr.headers().unwrap().clone();
        let idx = |h: &str| headers.iter().position(|x| x == h).unwrap();
        let (ri, ni, pi) = (idx("rack_id"), idx("node_name"), idx("position"));
        let topology = rdr
            .records()
            .map(|r| {
                let r = r.unwrap();
                (r[ri].to_owned(), r[ni].to_owned(), r[pi].parse().unwrap())
            })
            .collect();
        let jobs = rows(&root.join(subset).join("jobs.parquet"))
            .iter()
            .map(|r| Job {
                id: string(col(r, "job_id")),
                start: millis(col(r, "start_time")),
                end: millis(col(r, "end_time")),
                nodes: list(col(r, "nodes")),
            })
            .collect();
        let mut readings = BTreeMap::new();
        for (plugin, metric) in metrics {
            let path = root.join(subset).join(plugin).join(format!("{metric}.parquet"));
            let rs = rows(&path)
                .iter()
                .map(|r| Reading {
                    ts: millis(col(r, "timestamp")),
                    node: string(col(r, "node")),
                    value: match col(r, "value") {
                        Field::Double(v) => *v,
                        other => panic!("unexpected value {other:?}"),
                    },
                })
                .collect();
            readings.insert(metric.clone(), rs);
        }
        Oracle { topology, jobs, readings }
    }

    fn overlapping(&self, a: i64, b: i64) -> impl Iterator<Item = &Job> {
        self.jobs.iter().filter(move |j| j.start < b && j.end > a)
    }

    fn values(&self, metric: &str, node: Option<&[String]>, a: i64, b: i64) -> Vec<f64> {
        self.readings[metric]
            .iter()
            .filter(|r| r.ts >= a && r.ts < b && node.is_none_or(|ns| ns.contains(&r.node)))
            .map(|r| r.value)
            .collect()
    }

    pub fn answer(&self, q: &CorpusQuestion) -> Expected {
        let p = &q.params;
        let (a, b) = (p.start.map(ms).unwrap_or(0), p.end.map(ms).unwrap_or(0));
        let avg = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
        let sorted_ids = |it: &mut dyn Iterator<Item = &Job>| {
            let mut ids: Vec<String> = it.map(|j| j.id.clone()).collect();
            ids.sort();
            Expected::Rows(ids.into_iter().map(|i| vec![i]).collect())
        };
        match q.archetype {
            Archetype::RackNodes => {
                let rack = p.rack.as_deref().unwrap();
                let mut v: Vec<(u32, String)> =
                    self.topology.iter().filter(|t| t.0 == rack).map(|t| (t.2, t.1.clone())).collect();
                v.sort();
                Expected::Rows(v.into_iter().map(|(pos, n)| vec![n, pos.to_string()]).collect())
            }
            Archetype::JobNodes => {
                let job = self.jobs.iter().find(|j| Some(&j.id) == p.job.as_ref()).unwrap();
                let mut ns = job.nodes.clone();
                ns.sort();
                Expected::Rows(ns.into_iter().map(|n| vec![n]).collect())
            }
            Archetype::JobMetricAverage => {
                let job = self.jobs.iter().find(|j| Some(&j.id) == p.job.as_ref()).unwrap();
                let v = self.values(p.metric.as_deref().unwrap(), Some(&job.nodes), job.start, job.end);
                Expected::Numbers(vec![avg(&v)])
            }
            Archetype::LongJobsSubmitted => {
                let min_ms = i64::from(p.minutes.unwrap()) * 60_000;
                sorted_ids(&mut self.jobs.iter().filter(|j| j.start >= a && j.start < b && j.end - j.start > min_ms))
            }
            Archetype::NodeJobCount => {
                let node = p.node.clone().unwrap();
                let n = self.overlapping(a, b).filter(|j| j.nodes.contains(&node)).count();
                Expected::Rows(vec![vec![n.to_string()]])
            }
            Archetype::NodeMetricStats | Archetype::NodeMetricAverage => {
                let v = self.values(p.metric.as_deref().unwrap(), Some(&[p.node.clone().unwrap()]), a, b);
                assert!(!v.is_empty(), "window without readings");
                if q.archetype == Archetype::NodeMetricStats {
                    let max = v.iter().copied().fold(f64::MIN, f64::max);
                    let min = v.iter().copied().fold(f64::MAX, f64::min);
                    Expected::Numbers(vec![max, min, avg(&v)])
                } else {
                    Expected::Numbers(vec![avg(&v)])
                }
            }
            Archetype::RackJobCount => {
                let rack = p.rack.as_deref().unwrap();
                let nodes: BTreeSet<&str> =
                    self.topology.iter().filter(|t| t.0 == rack).map(|t| t.1.as_str()).collect();
                let n = self.overlapping(a, b).filter(|j| j.nodes.iter().any(|n| nodes.contains(n.as_str()))).count();
                Expected::Rows(vec![vec![n.to_string()]])
            }
            Archetype::NodesOverThreshold => {
                let thr = f64::from(p.threshold.unwrap());
                let nodes: BTreeSet<String> = self.readings[p.metric.as_deref().unwrap()]
                    .iter()
                    .filter(|r| r.ts >= a && r.ts < b && r.value > thr)
                    .map(|r| r.node.clone())
                    .collect();
                Expected::Rows(nodes.into_iter().map(|n| vec![n]).collect())
            }
            Archetype::AverageJobDuration => {
                let d: Vec<f64> = self
                    .jobs
                    .iter()
                    .filter(|j| j.start >= a && j.start < b)
                    .map(|j| ((j.end - j.start) / 1000) as f64)
                    .collect();
                Expected::Numbers(vec![avg(&d)])
            }
            Archetype::JobsRunning => sorted_ids(&mut self.overlapping(a, b)),
            Archetype::JobDurations => {
                let mut v: Vec<(String, i64)> = self.overlapping(a, b).map(|j| (j.id.clone(), (j.end - j.start) / 1000)).collect();
                v.sort();
                Expected::Rows(v.into_iter().map(|(id, s)| vec![id, s.to_string()]).collect())
            }
        }
    }

    /// `None` when `rows` matches; otherwise a description of the mismatch.
    pub fn check(&self, q: &CorpusQuestion, rows: &[Vec<String>]) -> Option<String> {
        let want = self.answer(q);
        match &want {
            Expected::Rows(w) if w.as_slice() == rows => None,
            Expected::Numbers(w) => {
                let got: Option<Vec<f64>> = match rows {
                    [row] => row.iter().map(|c| c.parse().ok()).collect(),
                    _ => None,
                };
                let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0);
                match got {
                    Some(g) if g.len() == w.len() && g.iter().zip(w).all(|(x, y)| close(*x, *y)) => None,
                    _ => Some(format!("want {want:?}, got {rows:?}")),
                }
            }
            _ => Some(format!("want {want:?}, got {rows:?}")),
        }
    }
}

pub fn utc_ms(ms: i64) -> DateTime<Utc> {
    Utc.timestamp_millis_opt(ms).unwrap()
}
