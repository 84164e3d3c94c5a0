//! Parquet layout:
//! `{root}/{subset}/{plugin}/{metric}.parquet` holds (timestamp, node, value)
//! sorted by (node, timestamp) with the unit in key-value metadata, and
//! `{root}/{subset}/jobs.parquet` holds (job_id, start_time, end_time, nodes).

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use chrono::{DateTime, TimeZone, Utc};
use parquet::column::reader::get_typed_column_reader;
use parquet::data_type::{ByteArray, ByteArrayType, DataType, DoubleType, Int64Type};
use parquet::errors::ParquetError;
use parquet::file::metadata::KeyValue;
use parquet::file::properties::WriterProperties;
use parquet::file::reader::{FileReader, SerializedFileReader};
use parquet::file::writer::SerializedFileWriter;
use parquet::schema::parser::parse_message_type;

use super::{Datalake, DatalakeError, JobRecord, JobSelector, ReadingBatch, ReadingQuery, TimeWindow};

const READINGS_SCHEMA: &str = "message readings {
    REQUIRED INT64 timestamp (TIMESTAMP(MILLIS, true));
    REQUIRED BYTE_ARRAY node (UTF8);
    REQUIRED DOUBLE value;
}";

const JOBS_SCHEMA: &str = "message jobs {
    REQUIRED BYTE_ARRAY job_id (UTF8);
    REQUIRED INT64 start_time (TIMESTAMP(MILLIS, true));
    REQUIRED INT64 end_time (TIMESTAMP(MILLIS, true));
    REPEATED BYTE_ARRAY nodes (UTF8);
}";

pub const UNIT_KEY: &str = "unit";

fn malformed(path: &Path, e: impl std::fmt::Display) -> DatalakeError {
    DatalakeError::MalformedStore(format!("{}: {e}", path.display()))
}

pub fn readings_path(root: &Path, subset: &str, plugin: &str, metric: &str) -> PathBuf {
    root.join(subset).join(plugin).join(format!("{metric}.parquet"))
}

pub fn jobs_path(root: &Path, subset: &str) -> PathBuf {
    root.join(subset).join("jobs.parquet")
}

pub(crate) fn millis_to_utc(ms: i64) -> Option<DateTime<Utc>> {
    Utc.timestamp_millis_opt(ms).single()
}

/// Writes one metric file. Rows must already be sorted by (node, timestamp).
pub fn write_readings(
    path: &Path,
    unit: &str,
    timestamp_ms: &[i64],
    node: &[String],
    value: &[f64],
) -> Result<(), ParquetError> {
    assert!(timestamp_ms.len() == node.len() && node.len() == value.len());
    let schema = Arc::new(parse_message_type(READINGS_SCHEMA)?);
    let props = WriterProperties::builder()
        .set_key_value_metadata(Some(vec![KeyValue::new(UNIT_KEY.to_owned(), unit.to_owned())]))
        .build();
    let mut writer = SerializedFileWriter::new(File::create(path)?, schema, Arc::new(props))?;
    let nodes: Vec<ByteArray> = node.iter().map(|n| ByteArray::from(n.as_str())).collect();
    let mut rg = writer.next_row_group()?;
    let mut idx = 0;
    while let Some(mut col) = rg.next_column()? {
        match idx {
            0 => col.typed::<Int64Type>().write_batch(timestamp_ms, None, None)?,
            1 => col.typed::<ByteArrayType>().write_batch(&nodes, None, None)?,
            _ => col.typed::<DoubleType>().write_batch(value, None, None)?,
        };
        col.close()?;
        idx += 1;
    }
    rg.close()?;
    writer.close()?;
    Ok(())
}

pub fn write_jobs(path: &Path, jobs: &[JobRecord]) -> Result<(), ParquetError> {
    let schema = Arc::new(parse_message_type(JOBS_SCHEMA)?);
    let mut writer = SerializedFileWriter::new(File::create(path)?, schema, Arc::new(WriterProperties::new()))?;
    let ids: Vec<ByteArray> = jobs.iter().map(|j| ByteArray::from(j.job_id.as_str())).collect();
    let starts: Vec<i64> = jobs.iter().map(|j| j.start_time.timestamp_millis()).collect();
    let ends: Vec<i64> = jobs.iter().map(|j| j.end_time.timestamp_millis()).collect();
    let mut nodes = Vec::new();
    let mut def = Vec::new();
    let mut rep = Vec::new();
    for job in jobs {
        if job.nodes.is_empty() {
            def.push(0);
            rep.push(0);
        }
        for (i, n) in job.nodes.iter().enumerate() {
            nodes.push(ByteArray::from(n.as_str()));
            def.push(1);
            rep.push(if i == 0 { 0 } else { 1 });
        }
    }
    let mut rg = writer.next_row_group()?;
    let mut idx = 0;
    while let Some(mut col) = rg.next_column()? {
        match idx {
            0 => col.typed::<ByteArrayType>().write_batch(&ids, None, None)?,
            1 => col.typed::<Int64Type>().write_batch(&starts, None, None)?,
            2 => col.typed::<Int64Type>().write_batch(&ends, None, None)?,
            _ => col.typed::<ByteArrayType>().write_batch(&nodes, Some(&def), Some(&rep))?,
        };
        col.close()?;
        idx += 1;
    }
    rg.close()?;
    writer.close()?;
    Ok(())
}

struct Column<T> {
    values: Vec<T>,
    def: Vec<i16>,
    rep: Vec<i16>,
}

fn read_column<T: DataType>(reader: &SerializedFileReader<File>, col: usize) -> Result<Column<T::T>, ParquetError> {
    let mut out = Column { values: Vec::new(), def: Vec::new(), rep: Vec::new() };
    for rg in 0..reader.num_row_groups() {
        let group = reader.get_row_group(rg)?;
        let rows = group.metadata().num_rows() as usize;
        let descr = group.metadata().column(col).column_descr_ptr();
        let mut typed = get_typed_column_reader::<T>(group.get_column_reader(col)?);
        let (want_def, want_rep) = (descr.max_def_level() > 0, descr.max_rep_level() > 0);
        let mut read = 0;
        while read < rows {
            let (records, _, _) = typed.read_records(
                rows - read,
                want_def.then_some(&mut out.def),
                want_rep.then_some(&mut out.rep),
                &mut out.values,
            )?;
            if records == 0 {
                break;
            }
            read += records;
        }
    }
    Ok(out)
}

fn utf8(b: &ByteArray) -> Result<String, ParquetError> {
    b.as_utf8().map(str::to_owned).map_err(|e| ParquetError::General(e.to_string()))
}

struct ReadingTable {
    unit: String,
    ts: Vec<i64>,
    node: Vec<String>,
    value: Vec<f64>,
    by_node: BTreeMap<String, Range<usize>>,
}

impl ReadingTable {
    fn load(path: &Path) -> Result<Self, DatalakeError> {
        let file = File::open(path).map_err(|e| malformed(path, e))?;
        let reader = SerializedFileReader::new(file).map_err(|e| malformed(path, e))?;
        let unit = reader
            .metadata()
            .file_metadata()
            .key_value_metadata()
            .and_then(|kv| kv.iter().find(|k| k.key == UNIT_KEY).and_then(|k| k.value.clone()))
            .unwrap_or_default();
        let ts = read_column::<Int64Type>(&reader, 0).map_err(|e| malformed(path, e))?.values;
        let node = read_column::<ByteArrayType>(&reader, 1)
            .and_then(|c| c.values.iter().map(utf8).collect::<Result<Vec<_>, _>>())
            .map_err(|e| malformed(path, e))?;
        let value = read_column::<DoubleType>(&reader, 2).map_err(|e| malformed(path, e))?.values;
        if ts.len() != node.len() || node.len() != value.len() {
            return Err(malformed(path, "column lengths differ"));
        }
        let mut by_node = BTreeMap::new();
        let mut start = 0;
        while start < node.len() {
            let end = start + node[start..].iter().take_while(|n| **n == node[start]).count();
            if by_node.insert(node[start].clone(), start..end).is_some() {
                return Err(malformed(path, "rows not sorted by node"));
            }
            if ts[start..end].windows(2).any(|w| w[0] > w[1]) {
                return Err(malformed(path, "rows not sorted by timestamp"));
            }
            start = end;
        }
        Ok(Self { unit, ts, node, value, by_node })
    }

    fn select(&self, q: &ReadingQuery, window: TimeWindow, out: &mut ReadingBatch) {
        let (lo, hi) = (window.start().timestamp_millis(), window.end().timestamp_millis());
        let ranges: Vec<Range<usize>> = match &q.node {
            Some(n) => self.by_node.get(n).cloned().into_iter().collect(),
            None => self.by_node.values().cloned().collect(),
        };
        for r in ranges {
            let ts = &self.ts[r.clone()];
            let a = r.start + ts.partition_point(|&t| t < lo);
            let b = r.start + ts.partition_point(|&t| t < hi);
            for i in a..b {
                out.timestamp.push(millis_to_utc(self.ts[i]).expect("in range"));
                out.node.push(self.node[i].clone());
                out.value.push(self.value[i]);
            }
        }
    }
}

struct Inner {
    dir: PathBuf,
    root: PathBuf,
    subset: String,
    readings: Mutex<HashMap<(String, String), Arc<ReadingTable>>>,
    jobs: Mutex<Option<Arc<Vec<JobRecord>>>>,
}

impl Inner {
    fn table(&self, plugin: &str, metric: &str) -> Result<Arc<ReadingTable>, DatalakeError> {
        let key = (plugin.to_owned(), metric.to_owned());
        if let Some(t) = self.readings.lock().unwrap().get(&key) {
            return Ok(t.clone());
        }
        let path = readings_path(&self.root, &self.subset, plugin, metric);
        if !path.is_file() {
            return Err(DatalakeError::UnknownMetric { plugin: plugin.to_owned(), metric: metric.to_owned() });
        }
        let table = Arc::new(ReadingTable::load(&path)?);
        self.readings.lock().unwrap().insert(key, table.clone());
        Ok(table)
    }

    fn all_jobs(&self) -> Result<Arc<Vec<JobRecord>>, DatalakeError> {
        if let Some(j) = self.jobs.lock().unwrap().as_ref() {
            return Ok(j.clone());
        }
        let path = jobs_path(&self.root, &self.subset);
        let jobs = Arc::new(load_jobs(&path)?);
        *self.jobs.lock().unwrap() = Some(jobs.clone());
        Ok(jobs)
    }

    fn fetch_jobs(&self, selector: &JobSelector) -> Result<Vec<JobRecord>, DatalakeError> {
        let jobs = self.all_jobs()?;
        Ok(match selector {
            JobSelector::Id { job_id } => jobs
                .binary_search_by(|j| j.job_id.as_str().cmp(job_id))
                .map(|i| vec![jobs[i].clone()])
                .unwrap_or_default(),
            JobSelector::Window { start, end } => {
                let w = TimeWindow::new(*start, *end)?;
                jobs.iter().filter(|j| w.overlaps(j.start_time, j.end_time)).cloned().collect()
            }
        })
    }

    fn fetch_readings(&self, q: &ReadingQuery) -> Result<ReadingBatch, DatalakeError> {
        let window = q.window()?;
        let table = self.table(&q.plugin, &q.metric)?;
        let mut out = ReadingBatch {
            plugin: q.plugin.clone(),
            metric: q.metric.clone(),
            unit: table.unit.clone(),
            ..Default::default()
        };
        table.select(q, window, &mut out);
        Ok(out)
    }
}

fn load_jobs(path: &Path) -> Result<Vec<JobRecord>, DatalakeError> {
    let file = File::open(path).map_err(|e| malformed(path, e))?;
    let reader = SerializedFileReader::new(file).map_err(|e| malformed(path, e))?;
    let m = |e: ParquetError| malformed(path, e);
    let ids = read_column::<ByteArrayType>(&reader, 0).map_err(m)?.values;
    let starts = read_column::<Int64Type>(&reader, 1).map_err(m)?.values;
    let ends = read_column::<Int64Type>(&reader, 2).map_err(m)?.values;
    let nodes = read_column::<ByteArrayType>(&reader, 3).map_err(m)?;
    if ids.len() != starts.len() || ids.len() != ends.len() {
        return Err(malformed(path, "column lengths differ"));
    }
    let mut lists: Vec<Vec<String>> = Vec::with_capacity(ids.len());
    let mut vals = nodes.values.iter();
    for (d, r) in nodes.def.iter().zip(&nodes.rep) {
        if *r == 0 {
            lists.push(Vec::new());
        }
        if *d == 1 {
            let v = vals.next().ok_or_else(|| malformed(path, "node list underflow"))?;
            lists.last_mut().ok_or_else(|| malformed(path, "node list starts mid-record"))?.push(utf8(v).map_err(m)?);
        }
    }
    if lists.len() != ids.len() {
        return Err(malformed(path, "node list count differs from job count"));
    }
    let ts = |ms: i64| millis_to_utc(ms).ok_or_else(|| malformed(path, "timestamp out of range"));
    let mut jobs = ids
        .iter()
        .zip(starts)
        .zip(ends)
        .zip(lists)
        .map(|(((id, s), e), nodes)| {
            Ok(JobRecord { job_id: utf8(id).map_err(m)?, start_time: ts(s)?, end_time: ts(e)?, nodes })
        })
        .collect::<Result<Vec<_>, DatalakeError>>()?;
    jobs.sort_by(|a, b| a.job_id.cmp(&b.job_id));
    Ok(jobs)
}

/// Parquet directory backend. Decoded files are cached for the lifetime of
/// the handle.
#[derive(Clone)]
pub struct ColumnarFiles {
    inner: Arc<Inner>,
}

impl ColumnarFiles {
    pub fn open(root: &Path, subset: &str) -> Result<Self, DatalakeError> {
        let dir = root.join(subset);
        if !dir.is_dir() {
            return Err(DatalakeError::Unavailable(format!("no subset directory {}", dir.display())));
        }
        Ok(Self {
            inner: Arc::new(Inner {
                dir,
                root: root.to_owned(),
                subset: subset.to_owned(),
                readings: Mutex::new(HashMap::new()),
                jobs: Mutex::new(None),
            }),
        })
    }

    pub fn subset_dir(&self) -> &Path {
        &self.inner.dir
    }

    async fn blocking<T: Send + 'static>(
        &self,
        f: impl FnOnce(&Inner) -> Result<T, DatalakeError> + Send + 'static,
    ) -> Result<T, DatalakeError> {
        let inner = self.inner.clone();
        tokio::task::spawn_blocking(move || f(&inner))
            .await
            .map_err(|e| DatalakeError::Unavailable(e.to_string()))?
    }
}

#[async_trait]
impl Datalake for ColumnarFiles {
    async fn fetch_jobs(&self, selector: &JobSelector) -> Result<Vec<JobRecord>, DatalakeError> {
        let selector = selector.clone();
        self.blocking(move |i| i.fetch_jobs(&selector)).await
    }

    async fn fetch_readings(&self, query: &ReadingQuery) -> Result<ReadingBatch, DatalakeError> {
        let query = query.clone();
        self.blocking(move |i| i.fetch_readings(&query)).await
    }

    async fn ping(&self) -> Result<(), DatalakeError> {
        if self.inner.dir.is_dir() {
            Ok(())
        } else {
            Err(DatalakeError::Unavailable(format!("{} vanished", self.inner.dir.display())))
        }
    }
}
