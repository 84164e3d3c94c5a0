//! Rule-based entity extraction from a user question.
//!
//! The question is lowercased, then each category (node, rack, job, metric,
//! plugin, start_time, end_time) is checked for a keyword and, when present,
//! a value is captured by a fixed pattern. Metrics resolve their plugin
//! through the plugin/metric map; node ids go through the optional alias map.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::LazyLock;

use chrono::{DateTime, NaiveDateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::rdf::format_timestamp;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ExtractError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("start_time {start} is after end_time {end}")]
    InvertedTimeRange { start: String, end: String },
}

#[derive(Debug, thiserror::Error)]
pub enum MetadataError {
    #[error("metric {metric:?} is listed under plugins {first:?} and {second:?}")]
    DuplicateMetric { metric: String, first: String, second: String },
    #[error("empty plugin or metric name")]
    EmptyName,
    #[error("alias {0:?} is listed twice (aliases are case-insensitive)")]
    DuplicateAlias(String),
    #[error("reading metadata: {0}")]
    Io(#[from] std::io::Error),
    #[error("metadata json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Node,
    Rack,
    Job,
    Metric,
    Plugin,
    StartTime,
    EndTime,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::Node,
        Category::Rack,
        Category::Job,
        Category::Metric,
        Category::Plugin,
        Category::StartTime,
        Category::EndTime,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Node => "node",
            Category::Rack => "rack",
            Category::Job => "job",
            Category::Metric => "metric",
            Category::Plugin => "plugin",
            Category::StartTime => "start_time",
            Category::EndTime => "end_time",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Entity {
    pub present: bool,
    pub value: Option<String>,
}

impl Entity {
    fn found(value: Option<String>) -> Self {
        Self { present: true, value }
    }
}

/// Per-category extraction result. Times are RFC 3339 UTC strings.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntityMap {
    pub node: Entity,
    pub rack: Entity,
    pub job: Entity,
    pub metric: Entity,
    pub plugin: Entity,
    pub start_time: Entity,
    pub end_time: Entity,
}

impl EntityMap {
    pub fn get(&self, cat: Category) -> &Entity {
        match cat {
            Category::Node => &self.node,
            Category::Rack => &self.rack,
            Category::Job => &self.job,
            Category::Metric => &self.metric,
            Category::Plugin => &self.plugin,
            Category::StartTime => &self.start_time,
            Category::EndTime => &self.end_time,
        }
    }

    pub fn get_mut(&mut self, cat: Category) -> &mut Entity {
        match cat {
            Category::Node => &mut self.node,
            Category::Rack => &mut self.rack,
            Category::Job => &mut self.job,
            Category::Metric => &mut self.metric,
            Category::Plugin => &mut self.plugin,
            Category::StartTime => &mut self.start_time,
            Category::EndTime => &mut self.end_time,
        }
    }

    pub fn present(&self) -> impl Iterator<Item = Category> + '_ {
        Category::ALL.into_iter().filter(|c| self.get(*c).present)
    }

    pub fn value(&self, cat: Category) -> Option<&str> {
        self.get(cat).value.as_deref()
    }

    pub fn time(&self, cat: Category) -> Option<DateTime<Utc>> {
        self.value(cat)
            .and_then(|v| DateTime::parse_from_rfc3339(v).ok())
            .map(|t| t.with_timezone(&Utc))
    }

    /// Both bounds present and parseable.
    pub fn window(&self) -> Option<(DateTime<Utc>, DateTime<Utc>)> {
        Some((self.time(Category::StartTime)?, self.time(Category::EndTime)?))
    }
}

/// Which branches of graph construction a question needs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionClass {
    TopologyOnly,
    JobCentric,
    MetricCentric,
    JobAndMetric,
    Invalid,
}

pub fn classify(entities: &EntityMap) -> QuestionClass {
    let present: Vec<Category> = entities.present().collect();
    if present.is_empty() {
        return QuestionClass::Invalid;
    }
    let job = entities.job.present;
    let metric = entities.metric.present;
    match (job, metric) {
        (true, true) => QuestionClass::JobAndMetric,
        (true, false) => QuestionClass::JobCentric,
        (false, true) => QuestionClass::MetricCentric,
        // Neither branch has anything to materialize; answered from the Base-KG.
        (false, false) => QuestionClass::TopologyOnly,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricInfo {
    pub plugin: String,
    pub unit: String,
}

/// metric (lowercase) -> plugin + unit.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PluginMetricMap {
    metrics: BTreeMap<String, MetricInfo>,
}

impl PluginMetricMap {
    pub fn new(plugins: &BTreeMap<String, BTreeMap<String, String>>) -> Result<Self, MetadataError> {
        let mut metrics: BTreeMap<String, MetricInfo> = BTreeMap::new();
        for (plugin, entries) in plugins {
            if plugin.trim().is_empty() {
                return Err(MetadataError::EmptyName);
            }
            for (metric, unit) in entries {
                let key = metric.to_lowercase();
                if key.trim().is_empty() {
                    return Err(MetadataError::EmptyName);
                }
                if let Some(prev) = metrics.get(&key) {
                    return Err(MetadataError::DuplicateMetric {
                        metric: key,
                        first: prev.plugin.clone(),
                        second: plugin.clone(),
                    });
                }
                metrics.insert(key, MetricInfo { plugin: plugin.clone(), unit: unit.clone() });
            }
        }
        Ok(Self { metrics })
    }

    pub fn get(&self, metric: &str) -> Option<&MetricInfo> {
        self.metrics.get(&metric.to_lowercase())
    }

    pub fn metrics(&self) -> impl Iterator<Item = (&str, &MetricInfo)> {
        self.metrics.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn plugins(&self) -> impl Iterator<Item = &str> {
        let mut plugins: Vec<&str> = self.metrics.values().map(|m| m.plugin.as_str()).collect();
        plugins.sort_unstable();
        plugins.dedup();
        plugins.into_iter()
    }

    pub fn is_empty(&self) -> bool {
        self.metrics.is_empty()
    }

    /// Longest metric name occurring in `text`; ties go to the
    /// lexicographically smaller name.
    fn longest_match(&self, text: &str) -> Option<&str> {
        self.metrics
            .keys()
            .filter(|m| text.contains(m.as_str()))
            .max_by(|a, b| a.len().cmp(&b.len()).then_with(|| b.cmp(a)))
            .map(String::as_str)
    }
}

/// alias (lowercase) -> canonical node name.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NodeMappings {
    aliases: BTreeMap<String, String>,
}

impl NodeMappings {
    pub fn new(aliases: &BTreeMap<String, String>) -> Result<Self, MetadataError> {
        let mut out = BTreeMap::new();
        for (alias, canonical) in aliases {
            if out.insert(alias.to_lowercase(), canonical.clone()).is_some() {
                return Err(MetadataError::DuplicateAlias(alias.clone()));
            }
        }
        Ok(Self { aliases: out })
    }

    pub fn canonical<'a>(&'a self, name: &'a str) -> &'a str {
        self.aliases.get(&name.to_lowercase()).map_or(name, String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.aliases.is_empty()
    }
}

/// Applies optional node mappings; identity when absent.
pub fn canonical_node<'a>(nm: Option<&'a NodeMappings>, name: &'a str) -> &'a str {
    nm.map_or(name, |m| m.canonical(name))
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct MetadataFile {
    #[serde(default)]
    plugins: BTreeMap<String, BTreeMap<String, String>>,
    #[serde(default)]
    node_mappings: BTreeMap<String, String>,
}

/// Sensor metadata: `{"plugins": {plugin: {metric: unit}}, "node_mappings": {alias: canonical}}`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Metadata {
    pub metrics: PluginMetricMap,
    pub node_mappings: NodeMappings,
}

impl Metadata {
    pub fn from_json(text: &str) -> Result<Self, MetadataError> {
        let file: MetadataFile = serde_json::from_str(text)?;
        Ok(Self {
            metrics: PluginMetricMap::new(&file.plugins)?,
            node_mappings: NodeMappings::new(&file.node_mappings)?,
        })
    }

    pub fn load(path: &Path) -> Result<Self, MetadataError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(plugins: &BTreeMap<String, BTreeMap<String, String>>, aliases: &BTreeMap<String, String>) -> String {
        let file = MetadataFile { plugins: plugins.clone(), node_mappings: aliases.clone() };
        serde_json::to_string_pretty(&file).expect("metadata serializes")
    }

    pub fn node_mappings(&self) -> Option<&NodeMappings> {
        (!self.node_mappings.is_empty()).then_some(&self.node_mappings)
    }
}

const TS: &str = r"\[?(\d{4}-\d{2}-\d{2} \d{2}:\d{2}:\d{2})\]?";

static NODE_WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bnode\b").unwrap());
static NODES_WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bnodes\b").unwrap());
static NODE_ID: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bnode\s+([a-z0-9_.\-]+)").unwrap());
static RACK_WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bracks?\b").unwrap());
static RACK_ID: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\brack\s+([a-z0-9_]+)").unwrap());
static JOB_WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bjobs?\b").unwrap());
static JOB_ID: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bjob(?:\s+id)?\s+([a-z0-9_]+)").unwrap());
static TIMESTAMP: LazyLock<Regex> = LazyLock::new(|| Regex::new(TS).unwrap());
static RANGE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(r"(?:between\s+{TS}\s+and|from\s+{TS}\s+(?:to|until))\s+{TS}")).unwrap()
});
static DATE_PREFIX: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\d{4}-\d{2}-\d{2}").unwrap());

/// Ids must carry a digit; this keeps "the node between ..." from capturing
/// an English word.
fn id_like(s: &str) -> bool {
    s.bytes().any(|b| b.is_ascii_digit())
}

fn first_id(re: &Regex, text: &str, cat: Category, reject: impl Fn(&str) -> bool) -> Option<String> {
    let ids: Vec<&str> = re
        .captures_iter(text)
        .filter_map(|c| c.get(1))
        .map(|m| m.as_str().trim_end_matches(['.', '-']))
        .filter(|s| id_like(s) && !reject(s))
        .collect();
    if ids.iter().skip(1).any(|s| *s != ids[0]) {
        warn!(category = cat.name(), ?ids, "several ids in question, keeping the first");
    }
    ids.first().map(|s| (*s).to_owned())
}

fn parse_ts(s: &str) -> Option<DateTime<Utc>> {
    NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S").ok().map(|t| t.and_utc())
}

fn extract_times(text: &str) -> (Option<DateTime<Utc>>, Option<DateTime<Utc>>) {
    if let Some(caps) = RANGE.captures(text) {
        let start = caps.get(1).or_else(|| caps.get(2)).and_then(|m| parse_ts(m.as_str()));
        let end = caps.get(3).and_then(|m| parse_ts(m.as_str()));
        if start.is_some() && end.is_some() {
            return (start, end);
        }
    }
    let first = TIMESTAMP.captures_iter(text).find_map(|c| parse_ts(&c[1]));
    (first, None)
}

/// Extracts entities from `question`.
pub fn extract_entities(
    question: &str,
    pmm: &PluginMetricMap,
    nm: Option<&NodeMappings>,
) -> Result<EntityMap, ExtractError> {
    let q = question.trim();
    if q.is_empty() {
        return Err(ExtractError::EmptyQuestion);
    }
    let text = q.to_lowercase();
    let mut e = EntityMap::default();

    if JOB_WORD.is_match(&text) {
        e.job = Entity::found(first_id(&JOB_ID, &text, Category::Job, |_| false));
    }
    if RACK_WORD.is_match(&text) {
        e.rack = Entity::found(first_id(&RACK_ID, &text, Category::Rack, |_| false));
    }

    let node_id = first_id(&NODE_ID, &text, Category::Node, |s| DATE_PREFIX.is_match(s));
    // A plural "nodes" next to a concrete job id asks for that job's nodes,
    // which is a job attribute rather than a node entity.
    let plural_only = NODES_WORD.is_match(&text) && !NODE_WORD.is_match(&text);
    if node_id.is_some() || NODE_WORD.is_match(&text) || (plural_only && e.job.value.is_none()) {
        let value = node_id.map(|id| canonical_node(nm, &id).to_owned());
        e.node = Entity::found(value);
    }

    if let Some(metric) = pmm.longest_match(&text) {
        let info = pmm.get(metric).expect("matched key exists");
        e.metric = Entity::found(Some(metric.to_owned()));
        e.plugin = Entity::found(Some(info.plugin.clone()));
    } else if let Some(plugin) = pmm
        .plugins()
        .filter(|p| Regex::new(&format!(r"\b{}\b", regex::escape(&p.to_lowercase()))).is_ok_and(|re| re.is_match(&text)))
        .max_by_key(|p| p.len())
    {
        e.plugin = Entity::found(Some(plugin.to_owned()));
    }

    let (start, end) = extract_times(&text);
    if let (Some(s), Some(t)) = (start, end) {
        if s > t {
            return Err(ExtractError::InvertedTimeRange { start: format_timestamp(s), end: format_timestamp(t) });
        }
    }
    if let Some(s) = start {
        e.start_time = Entity::found(Some(format_timestamp(s)));
    }
    if let Some(t) = end {
        e.end_time = Entity::found(Some(format_timestamp(t)));
    }
    Ok(e)
}
