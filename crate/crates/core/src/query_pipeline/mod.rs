//! Query refinement (rule-based repair of generated SPARQL) and execution.

mod lex;

use std::collections::BTreeSet;
use std::sync::LazyLock;
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::ontology::Vocabulary;
use crate::rdf::{Iri, RDF_NS, XSD_NS};
use crate::store::{GraphStore, QueryResult, StoreError};
use lex::{lex, Kind, Seg};

const RDFS_NS: &str = "http://www.w3.org/2000/01/rdf-schema#";
const MAX_EDIT_DISTANCE: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RuleId {
    /// Strip code fences and prose around the query.
    R1,
    /// Declare known prefixes that are used but not declared.
    R2,
    /// Type bare or plain timestamp literals as xsd:dateTime.
    R3,
    /// Map unknown vocabulary terms to the nearest known one.
    R4,
    /// Canonicalize datatype IRIs.
    R5,
}

impl RuleId {
    pub const ALL: [RuleId; 5] = [RuleId::R1, RuleId::R2, RuleId::R3, RuleId::R4, RuleId::R5];
}

impl std::fmt::Display for RuleId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct QrConfig {
    pub rules: Vec<RuleId>,
}

impl Default for QrConfig {
    fn default() -> Self {
        Self { rules: RuleId::ALL.to_vec() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementReport {
    pub input: String,
    pub output: String,
    pub applied: Vec<RuleId>,
    pub unresolved: Vec<String>,
}

impl RefinementReport {
    pub fn is_resolved(&self) -> bool {
        self.unresolved.is_empty()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum QueryError {
    #[error("no SPARQL query found in the generated text")]
    Unrefinable,
    #[error("refusing to execute a query with unresolved issues: {}", .0.join("; "))]
    RefusedUnresolved(Vec<String>),
    #[error(transparent)]
    Store(#[from] StoreError),
}

pub struct Refiner {
    vocab: Vocabulary,
    rules: BTreeSet<RuleId>,
}

static FENCE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)```[A-Za-z0-9_-]*[ \t]*\r?\n?(.*?)```").unwrap());
static START_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?im)^[ \t]*(PREFIX|BASE|SELECT|ASK|CONSTRUCT|DESCRIBE)\b").unwrap());
static START_ANY: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(PREFIX|BASE|SELECT|ASK|CONSTRUCT|DESCRIBE)\b").unwrap());
static MODIFIER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^\s*(GROUP\s+BY|HAVING|ORDER\s+BY|LIMIT|OFFSET|VALUES)\b").unwrap());
static PREFIX_DECL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bPREFIX\s+([A-Za-z][\w.-]*)?:\s*$").unwrap());
static PNAME: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(^|[^\w?$:.-])([A-Za-z][\w-]*)?:([A-Za-z_][\w-]*(?:\.[\w-]+)*)").unwrap());
static BARE_TS: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b(\d{4}-\d{2}-\d{2})T(\d{2}:\d{2}:\d{2}(?:\.\d+)?)(Z|[+-]\d{2}:\d{2})?").unwrap());
static TS_BODY: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(\d{4}-\d{2}-\d{2})[T ](\d{2}:\d{2}:\d{2}(?:\.\d+)?)(Z|[+-]\d{2}:\d{2})?$").unwrap());

fn canonical_timestamp(date: &str, time: &str, zone: Option<&str>) -> String {
    format!("{date}T{time}{}", zone.unwrap_or("Z"))
}

fn canonical_xsd(local: &str) -> Option<&'static str> {
    const NAMES: [&str; 12] = [
        "dateTime",
        "date",
        "time",
        "double",
        "float",
        "decimal",
        "integer",
        "int",
        "long",
        "string",
        "boolean",
        "dayTimeDuration",
    ];
    NAMES.into_iter().find(|n| n.eq_ignore_ascii_case(local))
}

/// Prefix declarations in order: (prefix, namespace).
fn declared_prefixes(segs: &[Seg]) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for (i, seg) in segs.iter().enumerate() {
        if seg.kind != Kind::Code {
            continue;
        }
        if let (Some(c), Some(next)) = (PREFIX_DECL.captures(&seg.text), segs.get(i + 1)) {
            if next.kind == Kind::Iri {
                let ns = next.text[1..next.text.len() - 1].to_owned();
                out.push((c.get(1).map_or("", |m| m.as_str()).to_owned(), ns));
            }
        }
    }
    out
}

fn parses(q: &str) -> Result<(), String> {
    oxigraph::sparql::SparqlEvaluator::new().parse_query(q).map(|_| ()).map_err(|e| e.to_string())
}

impl Refiner {
    pub fn new(vocab: Vocabulary, config: &QrConfig) -> Self {
        Self { vocab, rules: config.rules.iter().copied().collect() }
    }

    pub fn all_rules(vocab: Vocabulary) -> Self {
        Self::new(vocab, &QrConfig::default())
    }

    fn enabled(&self, r: RuleId) -> bool {
        self.rules.contains(&r)
    }

    pub fn refine(&self, raw: &str) -> Result<RefinementReport, QueryError> {
        if raw.trim().is_empty() {
            return Err(QueryError::Unrefinable);
        }
        let mut applied = Vec::new();
        let mut unresolved = Vec::new();
        let mut text = raw.to_owned();

        if self.enabled(RuleId::R1) {
            let block = extract_query(raw).ok_or(QueryError::Unrefinable)?;
            if block.trim() != raw.trim() {
                text = block;
                applied.push(RuleId::R1);
            }
        }
        if self.enabled(RuleId::R2) {
            if let Some(t) = self.inject_prefixes(&text) {
                text = t;
                applied.push(RuleId::R2);
            }
        }
        if self.enabled(RuleId::R3) {
            if let Some(t) = type_timestamps(&text) {
                text = t;
                applied.push(RuleId::R3);
            }
        }
        if self.enabled(RuleId::R4) {
            let (t, changed, issues) = self.repair_terms(&text);
            if changed {
                text = t;
                applied.push(RuleId::R4);
            }
            unresolved.extend(issues);
        }
        if self.enabled(RuleId::R5) {
            if let Some(t) = canonical_datatypes(&text) {
                text = t;
                applied.push(RuleId::R5);
            }
        }
        if unresolved.is_empty() {
            if let Err(e) = parses(&text) {
                unresolved.push(format!("syntax: {e}"));
            }
        }
        Ok(RefinementReport { input: raw.to_owned(), output: text, applied, unresolved })
    }

    fn known_prefixes(&self) -> [(&'static str, &str); 4] {
        [("oda", self.vocab.base_iri()), ("xsd", XSD_NS), ("rdf", RDF_NS), ("rdfs", RDFS_NS)]
    }

    fn inject_prefixes(&self, text: &str) -> Option<String> {
        let segs = lex(text);
        let declared: BTreeSet<String> = declared_prefixes(&segs).into_iter().map(|(p, _)| p).collect();
        let mut used = BTreeSet::new();
        for seg in segs.iter().filter(|s| s.kind == Kind::Code) {
            for c in PNAME.captures_iter(&seg.text) {
                used.insert(c.get(2).map_or("", |m| m.as_str()).to_owned());
            }
        }
        let mut header = String::new();
        for (p, ns) in self.known_prefixes() {
            if used.contains(p) && !declared.contains(p) {
                header.push_str(&format!("PREFIX {p}: <{ns}>\n"));
            }
        }
        (!header.is_empty()).then(|| header + text)
    }

    fn nearest_term(&self, name: &str) -> Result<String, String> {
        let mut terms: Vec<&str> = self.vocab.properties().map(|p| p.name.as_str()).collect();
        terms.extend(self.vocab.classes().iter().map(String::as_str));
        let mut best: Vec<(usize, &str)> = terms
            .into_iter()
            .map(|t| (strsim::levenshtein(name, t), t))
            .filter(|(d, _)| *d <= MAX_EDIT_DISTANCE)
            .collect();
        best.sort();
        match best.as_slice() {
            [] => Err(format!("unknown term {name:?} has no vocabulary match within distance {MAX_EDIT_DISTANCE}")),
            [(d0, _), (d1, _), ..] if d0 == d1 => {
                let ties: Vec<&str> = best.iter().filter(|(d, _)| d == d0).map(|(_, t)| *t).collect();
                Err(format!("unknown term {name:?} is equally close to {}", ties.join(", ")))
            }
            [(_, t), ..] => Ok((*t).to_owned()),
        }
    }

    fn repair_terms(&self, text: &str) -> (String, bool, Vec<String>) {
        let mut segs = lex(text);
        let base = self.vocab.base_iri();
        let ns_prefixes: BTreeSet<String> =
            declared_prefixes(&segs).into_iter().filter(|(_, ns)| ns == base).map(|(p, _)| p).collect();
        let mut changed = false;
        let mut issues = Vec::new();
        let fix = |name: &str, issues: &mut Vec<String>| -> Option<String> {
            if self.vocab.has_term(name) {
                return None;
            }
            match self.nearest_term(name) {
                Ok(t) => Some(t),
                Err(e) => {
                    if !issues.contains(&e) {
                        issues.push(e);
                    }
                    None
                }
            }
        };
        for seg in &mut segs {
            match seg.kind {
                Kind::Code => {
                    let mut out = String::with_capacity(seg.text.len());
                    let mut last = 0;
                    for c in PNAME.captures_iter(&seg.text) {
                        let prefix = c.get(2).map_or("", |m| m.as_str());
                        let local = c.get(3).unwrap();
                        if !ns_prefixes.contains(prefix) {
                            continue;
                        }
                        if let Some(t) = fix(local.as_str(), &mut issues) {
                            out.push_str(&seg.text[last..local.start()]);
                            out.push_str(&t);
                            last = local.end();
                        }
                    }
                    if last > 0 {
                        out.push_str(&seg.text[last..]);
                        seg.text = out;
                        changed = true;
                    }
                }
                Kind::Iri => {
                    let iri = &seg.text[1..seg.text.len() - 1];
                    if let Some(local) = iri.strip_prefix(base).filter(|l| !l.is_empty()) {
                        if let Some(t) = fix(local, &mut issues) {
                            seg.text = format!("<{base}{t}>");
                            changed = true;
                        }
                    }
                }
                _ => {}
            }
        }
        (lex::join(&segs), changed, issues)
    }
}

/// The first query block: a fenced block if there is one, otherwise the
/// span from the first query keyword to the last closing brace plus any
/// trailing solution modifiers.
fn extract_query(raw: &str) -> Option<String> {
    if let Some(c) = FENCE.captures(raw) {
        let inner = c.get(1).unwrap().as_str();
        if START_ANY.is_match(inner) || START_LINE.is_match(inner) {
            return extract_query(inner).or_else(|| Some(inner.trim().to_owned()));
        }
    }
    let start = START_LINE.find(raw).or_else(|| START_ANY.find(raw))?.start();
    let body = &raw[start..];
    let segs = lex(body);
    let mut pos = 0;
    let mut close = None;
    for seg in &segs {
        if seg.kind == Kind::Code {
            if let Some(i) = seg.text.rfind('}') {
                close = Some(pos + i + 1);
            }
        }
        pos += seg.text.len();
    }
    let Some(close) = close else {
        return Some(body.trim().to_owned());
    };
    let mut end = close;
    let rest = &body[close..];
    let mut offset = close;
    for line in rest.split_inclusive('\n') {
        let fence = line.find("```");
        let part = &line[..fence.unwrap_or(line.len())];
        let t = part.trim();
        if !t.is_empty() {
            if !MODIFIER.is_match(t) {
                break;
            }
            end = offset + part.len();
        }
        if fence.is_some() {
            break;
        }
        offset += line.len();
    }
    Some(body[..end].trim().to_owned())
}

fn type_timestamps(text: &str) -> Option<String> {
    let segs = lex(text);
    let mut out = Vec::with_capacity(segs.len());
    let mut changed = false;
    let datatype = if declared_prefixes(&segs).iter().any(|(p, ns)| p == "xsd" && ns == XSD_NS) {
        "xsd:dateTime".to_owned()
    } else {
        format!("<{XSD_NS}dateTime>")
    };
    for (i, seg) in segs.iter().enumerate() {
        match seg.kind {
            Kind::Code => {
                let replaced = BARE_TS.replace_all(&seg.text, |c: &regex::Captures| {
                    let ts = canonical_timestamp(&c[1], &c[2], c.get(3).map(|m| m.as_str()));
                    format!("\"{ts}\"^^{datatype}")
                });
                if replaced != seg.text {
                    changed = true;
                }
                out.push(Seg { kind: Kind::Code, text: replaced.into_owned() });
            }
            Kind::Str => {
                let next = segs.get(i + 1).map_or("", |s| if s.kind == Kind::Code { s.text.as_str() } else { "" });
                let typed = next.starts_with("^^");
                let tagged = next.starts_with('@');
                let body = lex::string_body(&seg.text).and_then(|b| TS_BODY.captures(b));
                match body {
                    Some(c) if !tagged => {
                        let ts = canonical_timestamp(&c[1], &c[2], c.get(3).map(|m| m.as_str()));
                        let lit = format!("\"{ts}\"");
                        let text = if typed { lit } else { format!("{lit}^^{datatype}") };
                        if text != seg.text {
                            changed = true;
                        }
                        out.push(Seg { kind: Kind::Str, text });
                    }
                    _ => out.push(seg.clone()),
                }
            }
            _ => out.push(seg.clone()),
        }
    }
    changed.then(|| lex::join(&out))
}

fn canonical_datatypes(text: &str) -> Option<String> {
    let mut segs = lex(text);
    let xsd_prefixes: BTreeSet<String> =
        declared_prefixes(&segs).into_iter().filter(|(_, ns)| ns == XSD_NS).map(|(p, _)| p).collect();
    static TYPED_PNAME: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\^\^([A-Za-z][\w-]*)?:([A-Za-z_][\w]*)").unwrap());
    let mut changed = false;
    for i in 0..segs.len() {
        if segs[i].kind != Kind::Code || !segs[i].text.starts_with("^^") {
            continue;
        }
        if segs[i].text == "^^" {
            if let Some(next) = segs.get_mut(i + 1).filter(|s| s.kind == Kind::Iri) {
                let iri = &next.text[1..next.text.len() - 1];
                let local = iri.rsplit(['#', '/']).next().unwrap_or("");
                let in_xsd = iri.starts_with(XSD_NS)
                    || iri.trim_start_matches("https://").trim_start_matches("http://").starts_with("www.w3.org/2001/XMLSchema");
                if let (true, Some(c)) = (in_xsd, canonical_xsd(local)) {
                    let fixed = format!("<{XSD_NS}{c}>");
                    if fixed != next.text {
                        next.text = fixed;
                        changed = true;
                    }
                }
            }
            continue;
        }
        let seg = &mut segs[i];
        if let Some(c) = TYPED_PNAME.captures(&seg.text) {
            let prefix = c.get(1).map_or("", |m| m.as_str());
            let local = c.get(2).unwrap();
            if !xsd_prefixes.contains(prefix) && prefix != "xsd" {
                continue;
            }
            if let Some(canon) = canonical_xsd(local.as_str()) {
                if canon != local.as_str() {
                    seg.text = format!("{}{canon}{}", &seg.text[..local.start()], &seg.text[local.end()..]);
                    changed = true;
                }
            }
        }
    }
    changed.then(|| lex::join(&segs))
}

/// Runs a refined query; refuses anything the refiner could not repair.
pub async fn execute(
    report: &RefinementReport,
    store: &dyn GraphStore,
    graphs: &[Iri],
) -> Result<(QueryResult, Duration), QueryError> {
    if !report.unresolved.is_empty() {
        return Err(QueryError::RefusedUnresolved(report.unresolved.clone()));
    }
    let t0 = Instant::now();
    let result = store.query(&report.output, graphs).await?;
    Ok((result, t0.elapsed()))
}
