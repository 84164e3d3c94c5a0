//! Deterministic SPARQL for the twelve question archetypes.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::SparqlError;
use crate::entities::{Category, EntityMap};
use crate::ontology::{EntityKind, Vocabulary, ONTOLOGY_NS};
use crate::rdf::XSD_NS;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Archetype {
    RackNodes = 1,
    JobNodes = 2,
    JobMetricAverage = 3,
    LongJobsSubmitted = 4,
    NodeJobCount = 5,
    NodeMetricStats = 6,
    RackJobCount = 7,
    NodesOverThreshold = 8,
    AverageJobDuration = 9,
    JobsRunning = 10,
    NodeMetricAverage = 11,
    JobDurations = 12,
}

impl Archetype {
    pub const ALL: [Archetype; 12] = [
        Archetype::RackNodes,
        Archetype::JobNodes,
        Archetype::JobMetricAverage,
        Archetype::LongJobsSubmitted,
        Archetype::NodeJobCount,
        Archetype::NodeMetricStats,
        Archetype::RackJobCount,
        Archetype::NodesOverThreshold,
        Archetype::AverageJobDuration,
        Archetype::JobsRunning,
        Archetype::NodeMetricAverage,
        Archetype::JobDurations,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.id() == id)
    }
}

static MINUTES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"higher than (\d+) minutes").unwrap());
static THRESHOLD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"threshold of (\d+(?:\.\d+)?)").unwrap());

fn has(q: &str, words: &[&str]) -> bool {
    words.iter().any(|w| q.contains(w))
}

/// Picks the archetype from question cues plus the extracted entities.
pub fn detect_archetype(question: &str, e: &EntityMap) -> Option<Archetype> {
    let q = question.to_lowercase();
    let job_id = e.value(Category::Job).is_some();
    let window = e.window().is_some();
    let metric = e.value(Category::Metric).is_some();
    let node_id = e.value(Category::Node).is_some();
    let rack_id = e.value(Category::Rack).is_some();

    if metric {
        if job_id {
            return Some(Archetype::JobMetricAverage);
        }
        if !window {
            return None;
        }
        if THRESHOLD.is_match(&q) {
            return Some(Archetype::NodesOverThreshold);
        }
        if node_id {
            return Some(if has(&q, &["maximum", "minimum"]) {
                Archetype::NodeMetricStats
            } else {
                Archetype::NodeMetricAverage
            });
        }
        return None;
    }
    if e.job.present {
        if job_id {
            return Some(Archetype::JobNodes);
        }
        if !window {
            return None;
        }
        if MINUTES.is_match(&q) {
            return Some(Archetype::LongJobsSubmitted);
        }
        if has(&q, &["average execution time", "mean execution time"]) {
            return Some(Archetype::AverageJobDuration);
        }
        if q.contains("duration") {
            return Some(Archetype::JobDurations);
        }
        if has(&q, &["how many", "number of"]) {
            if node_id {
                return Some(Archetype::NodeJobCount);
            }
            if rack_id {
                return Some(Archetype::RackJobCount);
            }
        }
        return Some(Archetype::JobsRunning);
    }
    if rack_id {
        return Some(Archetype::RackNodes);
    }
    None
}

const HEADER: &str = "PREFIX oda: <https://oda.example/ontology#>\nPREFIX xsd: <http://www.w3.org/2001/XMLSchema#>\n";

fn dt(v: &str) -> String {
    format!("\"{v}\"^^xsd:dateTime")
}

fn string_lit(v: &str) -> String {
    let mut out = String::with_capacity(v.len() + 2);
    out.push('"');
    for c in v.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Binds `?seconds` to the whole-second length of `[?s, ?e]`; exact for
/// spans under 31 days.
const DURATION_SECONDS: &str = "BIND(\"1970-01-01T00:00:00Z\"^^xsd:dateTime + (?e - ?s) AS ?d)\n  \
     BIND((DAY(?d) - 1) * 86400 + HOURS(?d) * 3600 + MINUTES(?d) * 60 + SECONDS(?d) AS ?seconds)";

struct Params<'a> {
    e: &'a EntityMap,
    vocab: &'a Vocabulary,
    q: String,
}

impl Params<'_> {
    fn need(&self, cat: Category) -> Result<&str, SparqlError> {
        self.e.value(cat).ok_or(SparqlError::MissingParameter(cat.name()))
    }

    fn iri(&self, kind: EntityKind, cat: Category) -> Result<String, SparqlError> {
        let v = self.need(cat)?;
        Ok(self.vocab.iri_for(kind, &[v]).map_err(|e| SparqlError::Template(e.to_string()))?.to_string())
    }

    fn window(&self) -> Result<(String, String), SparqlError> {
        Ok((dt(self.need(Category::StartTime)?), dt(self.need(Category::EndTime)?)))
    }

    fn overlap(&self) -> Result<String, SparqlError> {
        let (a, b) = self.window()?;
        Ok(format!("FILTER(?s < {b} && ?e > {a})"))
    }

    fn within(&self, var: &str) -> Result<String, SparqlError> {
        let (a, b) = self.window()?;
        Ok(format!("FILTER(?{var} >= {a} && ?{var} < {b})"))
    }

    fn metric(&self) -> Result<String, SparqlError> {
        Ok(string_lit(self.need(Category::Metric)?))
    }

    fn capture(&self, re: &Regex, what: &'static str) -> Result<String, SparqlError> {
        re.captures(&self.q).map(|c| c[1].to_owned()).ok_or(SparqlError::MissingParameter(what))
    }
}

/// SPARQL for a question; the text supplies the numeric parameters
/// (minutes, threshold) that are not entity categories.
pub fn generate_template(question: &str, e: &EntityMap, vocab: &Vocabulary) -> Result<(Archetype, String), SparqlError> {
    let arch = detect_archetype(question, e).ok_or(SparqlError::UnsupportedArchetype)?;
    let p = Params { e, vocab, q: question.to_lowercase() };
    let body = match arch {
        Archetype::RackNodes => format!(
            "SELECT ?node ?position WHERE {{\n  {} oda:containsNode ?n .\n  ?n oda:nodeName ?node ;\n     oda:position ?position .\n}}\nORDER BY ?position",
            p.iri(EntityKind::Rack, Category::Rack)?
        ),
        Archetype::JobNodes => format!(
            "SELECT ?node WHERE {{\n  {} oda:usedNode ?n .\n  ?n oda:nodeName ?node .\n}}\nORDER BY ?node",
            p.iri(EntityKind::Job, Category::Job)?
        ),
        Archetype::JobMetricAverage => format!(
            "SELECT (AVG(?v) AS ?average) WHERE {{\n  {} oda:usedNode ?n ;\n     oda:startTime ?js ;\n     oda:endTime ?je .\n  ?n oda:hasPlugin ?p .\n  ?p oda:hasSensor ?sensor .\n  ?sensor oda:metricName {} ;\n     oda:hasReading ?r .\n  ?r oda:value ?v ;\n     oda:timestamp ?t .\n  FILTER(?t >= ?js && ?t < ?je)\n}}",
            p.iri(EntityKind::Job, Category::Job)?,
            p.metric()?
        ),
        Archetype::LongJobsSubmitted => {
            let minutes = p.capture(&MINUTES, "minutes")?;
            format!(
                "SELECT ?job WHERE {{\n  ?j a oda:Job ;\n     oda:jobId ?job ;\n     oda:startTime ?s ;\n     oda:endTime ?e .\n  {}\n  FILTER((?e - ?s) > \"PT{minutes}M\"^^xsd:dayTimeDuration)\n}}\nORDER BY ?job",
                p.within("s")?
            )
        }
        Archetype::NodeJobCount => format!(
            "SELECT (COUNT(DISTINCT ?j) AS ?jobs) WHERE {{\n  ?j a oda:Job ;\n     oda:usedNode {} ;\n     oda:startTime ?s ;\n     oda:endTime ?e .\n  {}\n}}",
            p.iri(EntityKind::Node, Category::Node)?,
            p.overlap()?
        ),
        Archetype::NodeMetricStats | Archetype::NodeMetricAverage => {
            let proj = if arch == Archetype::NodeMetricStats {
                "(MAX(?v) AS ?maximum) (MIN(?v) AS ?minimum) (AVG(?v) AS ?average)"
            } else {
                "(AVG(?v) AS ?average)"
            };
            format!(
                "SELECT {proj} WHERE {{\n  {} oda:hasPlugin ?p .\n  ?p oda:hasSensor ?sensor .\n  ?sensor oda:metricName {} ;\n     oda:hasReading ?r .\n  ?r oda:value ?v ;\n     oda:timestamp ?t .\n  {}\n}}",
                p.iri(EntityKind::Node, Category::Node)?,
                p.metric()?,
                p.within("t")?
            )
        }
        Archetype::RackJobCount => format!(
            "SELECT (COUNT(DISTINCT ?j) AS ?jobs) WHERE {{\n  {} oda:containsNode ?n .\n  ?j a oda:Job ;\n     oda:usedNode ?n ;\n     oda:startTime ?s ;\n     oda:endTime ?e .\n  {}\n}}",
            p.iri(EntityKind::Rack, Category::Rack)?,
            p.overlap()?
        ),
        Archetype::NodesOverThreshold => {
            let threshold = p.capture(&THRESHOLD, "threshold")?;
            format!(
                "SELECT DISTINCT ?node WHERE {{\n  ?n oda:hasPlugin ?p ;\n     oda:nodeName ?node .\n  ?p oda:hasSensor ?sensor .\n  ?sensor oda:metricName {} ;\n     oda:hasReading ?r .\n  ?r oda:value ?v ;\n     oda:timestamp ?t .\n  {}\n  FILTER(?v > {threshold})\n}}\nORDER BY ?node",
                p.metric()?,
                p.within("t")?
            )
        }
        Archetype::AverageJobDuration => format!(
            "SELECT (AVG(?seconds) AS ?average_seconds) WHERE {{\n  ?j a oda:Job ;\n     oda:startTime ?s ;\n     oda:endTime ?e .\n  {}\n  {DURATION_SECONDS}\n}}",
            p.within("s")?
        ),
        Archetype::JobsRunning => format!(
            "SELECT ?job WHERE {{\n  ?j a oda:Job ;\n     oda:jobId ?job ;\n     oda:startTime ?s ;\n     oda:endTime ?e .\n  {}\n}}\nORDER BY ?job",
            p.overlap()?
        ),
        Archetype::JobDurations => format!(
            "SELECT ?job ?seconds WHERE {{\n  ?j a oda:Job ;\n     oda:jobId ?job ;\n     oda:startTime ?s ;\n     oda:endTime ?e .\n  {}\n  {DURATION_SECONDS}\n}}\nORDER BY ?job",
            p.overlap()?
        ),
    };
    debug_assert!(HEADER.contains(ONTOLOGY_NS) && HEADER.contains(XSD_NS));
    Ok((arch, format!("{HEADER}{body}\n")))
}
