//! ODA vocabulary, resource IRI scheme and the static topology graph.
//!
//! The vocabulary is a compact stand-in for a full ODA ontology: six classes
//! and fifteen properties, enough to describe facility topology, jobs and
//! sensor readings.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};

use crate::rdf::{Datatype, Iri, Literal, Triple, RDF_TYPE, XSD_NS};

pub const ONTOLOGY_NS: &str = "https://oda.example/ontology#";
pub const RESOURCE_BASE: &str = "https://oda.example/resource/";
pub const GRAPH_BASE: &str = "https://oda.example/graph/";

/// Everything outside RFC 3986 "unreserved" gets percent-encoded.
const SEGMENT: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'.').remove(b'_').remove(b'~');

#[derive(Debug, thiserror::Error)]
pub enum OntologyError {
    #[error("invalid id component {0:?}")]
    InvalidId(String),
    #[error("{kind} IRIs take {expected} id component(s), got {got}")]
    WrongArity { kind: EntityKind, expected: usize, got: usize },
    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),
    #[error("vocabulary has no term {0:?}")]
    MissingTerm(String),
    #[error("duplicate topology entry: {0}")]
    DuplicateTopology(String),
    #[error("reading topology: {0}")]
    Io(#[from] std::io::Error),
    #[error("topology csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EntityKind {
    Rack,
    Node,
    Job,
    Plugin,
    Sensor,
    Reading,
}

impl EntityKind {
    pub fn segment(self) -> &'static str {
        match self {
            EntityKind::Rack => "rack",
            EntityKind::Node => "node",
            EntityKind::Job => "job",
            EntityKind::Plugin => "plugin",
            EntityKind::Sensor => "sensor",
            EntityKind::Reading => "reading",
        }
    }

    /// Number of id components: plugins are scoped by node, sensors by
    /// (node, plugin, metric), readings by the sensor ids plus a timestamp.
    pub fn arity(self) -> usize {
        match self {
            EntityKind::Rack | EntityKind::Node | EntityKind::Job => 1,
            EntityKind::Plugin => 2,
            EntityKind::Sensor => 3,
            EntityKind::Reading => 4,
        }
    }
}

impl std::fmt::Display for EntityKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.segment())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Range {
    Class(String),
    Datatype(Datatype),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Property {
    pub name: String,
    pub domain: String,
    pub range: Range,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    base_iri: String,
    resource_base: String,
    classes: Vec<String>,
    object_properties: Vec<Property>,
    data_properties: Vec<Property>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::oda()
    }
}

impl Vocabulary {
    pub fn new(
        base_iri: impl Into<String>,
        resource_base: impl Into<String>,
        classes: Vec<String>,
        object_properties: Vec<Property>,
        data_properties: Vec<Property>,
    ) -> Result<Self, OntologyError> {
        let vocab = Self {
            base_iri: base_iri.into(),
            resource_base: resource_base.into(),
            classes,
            object_properties,
            data_properties,
        };
        vocab.validate()?;
        Ok(vocab)
    }

    /// The default ODA vocabulary.
    pub fn oda() -> Self {
        let obj = |name: &str, domain: &str, range: &str| Property {
            name: name.into(),
            domain: domain.into(),
            range: Range::Class(range.into()),
        };
        let data = |name: &str, domain: &str, dt: Datatype| Property {
            name: name.into(),
            domain: domain.into(),
            range: Range::Datatype(dt),
        };
        Self {
            base_iri: ONTOLOGY_NS.into(),
            resource_base: RESOURCE_BASE.into(),
            classes: ["Rack", "Node", "Job", "Plugin", "Sensor", "Reading"]
                .into_iter()
                .map(String::from)
                .collect(),
            object_properties: vec![
                obj("containsNode", "Rack", "Node"),
                obj("usedNode", "Job", "Node"),
                obj("hasPlugin", "Node", "Plugin"),
                obj("hasSensor", "Plugin", "Sensor"),
                obj("hasReading", "Sensor", "Reading"),
            ],
            data_properties: vec![
                data("jobId", "Job", Datatype::String),
                data("startTime", "Job", Datatype::DateTime),
                data("endTime", "Job", Datatype::DateTime),
                data("position", "Node", Datatype::Integer),
                data("nodeName", "Node", Datatype::String),
                data("rackName", "Rack", Datatype::String),
                data("metricName", "Sensor", Datatype::String),
                data("value", "Reading", Datatype::Double),
                data("timestamp", "Reading", Datatype::DateTime),
                data("unit", "Reading", Datatype::String),
            ],
        }
    }

    fn validate(&self) -> Result<(), OntologyError> {
        for base in [&self.base_iri, &self.resource_base] {
            if !crate::rdf::is_absolute_iri(base) || !(base.ends_with('/') || base.ends_with('#')) {
                return Err(OntologyError::InvalidVocabulary(format!(
                    "base {base:?} must be an absolute IRI ending in '/' or '#'"
                )));
            }
        }
        let mut seen = HashSet::new();
        for name in self.classes.iter().chain(self.properties().map(|p| &p.name)) {
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(OntologyError::InvalidVocabulary(format!("bad term name {name:?}")));
            }
            // class and property names share the namespace, so they must not collide
            if !seen.insert(name.as_str()) {
                return Err(OntologyError::InvalidVocabulary(format!("duplicate term {name:?}")));
            }
        }
        Ok(())
    }

    pub fn base_iri(&self) -> &str {
        &self.base_iri
    }

    pub fn resource_base(&self) -> &str {
        &self.resource_base
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn object_properties(&self) -> &[Property] {
        &self.object_properties
    }

    pub fn data_properties(&self) -> &[Property] {
        &self.data_properties
    }

    pub fn properties(&self) -> impl Iterator<Item = &Property> {
        self.object_properties.iter().chain(&self.data_properties)
    }

    pub fn property(&self, name: &str) -> Option<&Property> {
        self.properties().find(|p| p.name == name)
    }

    pub fn has_term(&self, name: &str) -> bool {
        self.classes.iter().any(|c| c == name) || self.property(name).is_some()
    }

    /// IRI of a class or property declared in this vocabulary.
    pub fn term(&self, name: &str) -> Result<Iri, OntologyError> {
        if self.has_term(name) {
            Ok(Iri::new_unchecked(format!("{}{name}", self.base_iri)))
        } else {
            Err(OntologyError::MissingTerm(name.to_owned()))
        }
    }

    /// Resource IRI `{resource_base}{kind}/{id}/...` with every id
    /// percent-encoded, so distinct id tuples never collide.
    pub fn iri_for(&self, kind: EntityKind, ids: &[&str]) -> Result<Iri, OntologyError> {
        if ids.len() != kind.arity() {
            return Err(OntologyError::WrongArity { kind, expected: kind.arity(), got: ids.len() });
        }
        let mut out = String::with_capacity(self.resource_base.len() + 16 + ids.iter().map(|s| s.len()).sum::<usize>());
        out.push_str(&self.resource_base);
        out.push_str(kind.segment());
        for id in ids {
            if id.trim().is_empty() {
                return Err(OntologyError::InvalidId((*id).to_owned()));
            }
            out.push('/');
            out.extend(utf8_percent_encode(id, SEGMENT));
        }
        Ok(Iri::new_unchecked(out))
    }

    /// Compact line-oriented rendering for prompts.
    pub fn context_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "PREFIX oda: <{}>", self.base_iri);
        let _ = writeln!(out, "PREFIX xsd: <{XSD_NS}>");
        let _ = writeln!(out, "RESOURCES <{}{{kind}}/{{id}}>", self.resource_base);
        out.push_str("CLASSES");
        for class in &self.classes {
            let _ = write!(out, " oda:{class}");
        }
        out.push('\n');
        out.push_str("PROPERTIES\n");
        for p in self.properties() {
            let range = match &p.range {
                Range::Class(c) => format!("oda:{c}"),
                Range::Datatype(d) => format!("xsd:{}", d.local_name()),
            };
            let _ = writeln!(out, "oda:{} oda:{} -> {}", p.name, p.domain, range);
        }
        out
    }
}

/// One row of the facility topology table.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TopologyRecord {
    pub rack_id: String,
    pub node_name: String,
    pub position: u32,
}

pub fn load_topology_csv(path: &Path) -> Result<Vec<TopologyRecord>, OntologyError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut out = Vec::new();
    for row in reader.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

pub fn write_topology_csv(path: &Path, records: &[TopologyRecord]) -> Result<(), OntologyError> {
    let mut writer = csv::Writer::from_path(path)?;
    for r in records {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}

fn check_topology(records: &[TopologyRecord]) -> Result<(), OntologyError> {
    let mut nodes: HashMap<&str, &str> = HashMap::new();
    let mut slots = HashSet::new();
    for r in records {
        if r.rack_id.trim().is_empty() || r.node_name.trim().is_empty() {
            return Err(OntologyError::InvalidId(format!("{}/{}", r.rack_id, r.node_name)));
        }
        // node IRIs are global, so a node name may appear in one rack only
        if let Some(prev) = nodes.insert(&r.node_name, &r.rack_id) {
            return Err(OntologyError::DuplicateTopology(format!(
                "node {} listed under racks {prev} and {}",
                r.node_name, r.rack_id
            )));
        }
        if !slots.insert((&r.rack_id, r.position)) {
            return Err(OntologyError::DuplicateTopology(format!(
                "position {} used twice in rack {}",
                r.position, r.rack_id
            )));
        }
    }
    Ok(())
}

/// Static topology graph: 2 triples per rack, 4 per node.
pub fn build_base_kg(vocab: &Vocabulary, topology: &[TopologyRecord]) -> Result<Vec<Triple>, OntologyError> {
    check_topology(topology)?;
    let rdf_type = Iri::new_unchecked(RDF_TYPE.to_owned());
    let rack_class = vocab.term("Rack")?;
    let node_class = vocab.term("Node")?;
    let rack_name = vocab.term("rackName")?;
    let node_name = vocab.term("nodeName")?;
    let position = vocab.term("position")?;
    let contains = vocab.term("containsNode")?;

    let mut racks_seen = HashSet::new();
    let mut out = Vec::with_capacity(topology.len() * 5);
    for r in topology {
        let rack = vocab.iri_for(EntityKind::Rack, &[&r.rack_id])?;
        if racks_seen.insert(r.rack_id.as_str()) {
            out.push(Triple::new(rack.clone(), rdf_type.clone(), rack_class.clone()));
            out.push(Triple::new(rack.clone(), rack_name.clone(), Literal::string(&r.rack_id)));
        }
        let node = vocab.iri_for(EntityKind::Node, &[&r.node_name])?;
        out.push(Triple::new(node.clone(), rdf_type.clone(), node_class.clone()));
        out.push(Triple::new(node.clone(), node_name.clone(), Literal::string(&r.node_name)));
        out.push(Triple::new(node.clone(), position.clone(), Literal::integer(i64::from(r.position))));
        out.push(Triple::new(rack, contains.clone(), node));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn topo(rack: &str, node: &str, pos: u32) -> TopologyRecord {
        TopologyRecord { rack_id: rack.into(), node_name: node.into(), position: pos }
    }

    #[test]
    fn iri_scheme() {
        let v = Vocabulary::oda();
        assert_eq!(
            v.iri_for(EntityKind::Rack, &["r241"]).unwrap().as_str(),
            "https://oda.example/resource/rack/r241"
        );
        assert_eq!(
            v.iri_for(EntityKind::Sensor, &["node42", "ipmi", "total_power"]).unwrap().as_str(),
            "https://oda.example/resource/sensor/node42/ipmi/total_power"
        );
        assert_eq!(
            v.iri_for(EntityKind::Node, &["node 42"]).unwrap().as_str(),
            "https://oda.example/resource/node/node%2042"
        );
    }

    #[test]
    fn iri_errors() {
        let v = Vocabulary::oda();
        assert!(matches!(v.iri_for(EntityKind::Node, &["  "]), Err(OntologyError::InvalidId(_))));
        assert!(matches!(v.iri_for(EntityKind::Node, &[""]), Err(OntologyError::InvalidId(_))));
        assert!(matches!(
            v.iri_for(EntityKind::Sensor, &["n1", "ipmi"]),
            Err(OntologyError::WrongArity { expected: 3, got: 2, .. })
        ));
    }

    #[test]
    fn slash_in_id_does_not_collide() {
        let v = Vocabulary::oda();
        let a = v.iri_for(EntityKind::Plugin, &["a/b", "c"]).unwrap();
        let b = v.iri_for(EntityKind::Plugin, &["a", "b/c"]).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn base_kg_counts() {
        let v = Vocabulary::oda();
        assert_eq!(build_base_kg(&v, &[]).unwrap().len(), 0);
        assert_eq!(build_base_kg(&v, &[topo("r1", "n1", 0)]).unwrap().len(), 6);
        let ten: Vec<_> = (0..10).map(|i| topo(if i < 5 { "r1" } else { "r2" }, &format!("n{i}"), i % 5)).collect();
        assert_eq!(build_base_kg(&v, &ten).unwrap().len(), 44);
    }

    #[test]
    fn base_kg_rejects_duplicates() {
        let v = Vocabulary::oda();
        let dup_node = [topo("r1", "n1", 0), topo("r2", "n1", 0)];
        assert!(matches!(build_base_kg(&v, &dup_node), Err(OntologyError::DuplicateTopology(_))));
        let dup_slot = [topo("r1", "n1", 3), topo("r1", "n2", 3)];
        assert!(matches!(build_base_kg(&v, &dup_slot), Err(OntologyError::DuplicateTopology(_))));
    }

    #[test]
    fn context_text_shape() {
        let v = Vocabulary::oda();
        let text = v.context_text();
        assert_eq!(text, v.context_text());
        let property_lines = text.lines().filter(|l| l.starts_with("oda:")).count();
        assert_eq!(property_lines, 15);
        assert!(text.contains("oda:startTime oda:Job -> xsd:dateTime"));

        let empty = Vocabulary::new(ONTOLOGY_NS, RESOURCE_BASE, vec![], vec![], vec![]).unwrap();
        let lines: Vec<_> = empty.context_text().lines().map(str::to_owned).collect();
        assert_eq!(lines, ["PREFIX oda: <https://oda.example/ontology#>", "PREFIX xsd: <http://www.w3.org/2001/XMLSchema#>",
            "RESOURCES <https://oda.example/resource/{kind}/{id}>", "CLASSES", "PROPERTIES"]);
    }

    #[test]
    fn vocabulary_validation() {
        assert!(Vocabulary::new("https://x.example/ns", RESOURCE_BASE, vec![], vec![], vec![]).is_err());
        assert!(Vocabulary::new("not an iri/", RESOURCE_BASE, vec![], vec![], vec![]).is_err());
        let p = Property { name: "Node".into(), domain: "Node".into(), range: Range::Datatype(Datatype::String) };
        assert!(Vocabulary::new(ONTOLOGY_NS, RESOURCE_BASE, vec!["Node".into()], vec![], vec![p]).is_err());
    }

    #[test]
    fn default_terms_are_distinct() {
        let v = Vocabulary::oda();
        let names: Vec<&String> = v.classes().iter().chain(v.properties().map(|p| &p.name)).collect();
        let iris: HashSet<_> = names.iter().map(|n| v.term(n).unwrap()).collect();
        assert_eq!(iris.len(), names.len());
    }
}
