//! Minimal RDF term model used by the graph builders and serializers.
//!
//! Only what the telemetry graphs need: absolute IRIs as subjects and
//! predicates, IRIs or typed literals as objects. No blank nodes, no
//! language tags.

use std::fmt;

use chrono::{DateTime, SecondsFormat, Utc};

pub const XSD_NS: &str = "http://www.w3.org/2001/XMLSchema#";
pub const RDF_NS: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#";
pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum RdfError {
    #[error("not an absolute IRI: {0:?}")]
    InvalidIri(String),
    #[error("invalid lexical form {lexical:?} for {datatype}")]
    InvalidLexical { lexical: String, datatype: String },
}

/// An absolute IRI.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Iri(String);

impl Iri {
    pub fn parse(s: impl Into<String>) -> Result<Self, RdfError> {
        let s = s.into();
        if is_absolute_iri(&s) {
            Ok(Self(s))
        } else {
            Err(RdfError::InvalidIri(s))
        }
    }

    /// Caller guarantees `s` is an absolute IRI (e.g. built from a validated base).
    pub(crate) fn new_unchecked(s: String) -> Self {
        debug_assert!(is_absolute_iri(&s), "{s}");
        Self(s)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for Iri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}>", self.0)
    }
}

/// Scheme check plus the characters N-Triples forbids inside `<...>`.
pub fn is_absolute_iri(s: &str) -> bool {
    let Some(colon) = s.find(':') else {
        return false;
    };
    let scheme = &s[..colon];
    let mut chars = scheme.chars();
    let scheme_ok = matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'));
    scheme_ok
        && colon + 1 < s.len()
        && !s
            .chars()
            .any(|c| c <= ' ' || matches!(c, '<' | '>' | '"' | '{' | '}' | '|' | '^' | '`' | '\\'))
}

/// The literal datatypes the vocabulary uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Datatype {
    String,
    DateTime,
    Double,
    Integer,
}

impl Datatype {
    pub fn local_name(self) -> &'static str {
        match self {
            Datatype::String => "string",
            Datatype::DateTime => "dateTime",
            Datatype::Double => "double",
            Datatype::Integer => "integer",
        }
    }

    pub fn iri_str(self) -> &'static str {
        match self {
            Datatype::String => "http://www.w3.org/2001/XMLSchema#string",
            Datatype::DateTime => "http://www.w3.org/2001/XMLSchema#dateTime",
            Datatype::Double => "http://www.w3.org/2001/XMLSchema#double",
            Datatype::Integer => "http://www.w3.org/2001/XMLSchema#integer",
        }
    }

    pub fn from_iri(iri: &str) -> Option<Self> {
        [Self::String, Self::DateTime, Self::Double, Self::Integer]
            .into_iter()
            .find(|d| d.iri_str() == iri)
    }
}

/// A typed literal in canonical lexical form.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Literal {
    lexical: String,
    datatype: Datatype,
}

// Datatype has no natural order; order by IRI text.
impl PartialOrd for Datatype {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Datatype {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.iri_str().cmp(other.iri_str())
    }
}

impl Literal {
    pub fn string(s: impl Into<String>) -> Self {
        Self { lexical: s.into(), datatype: Datatype::String }
    }

    pub fn integer(v: i64) -> Self {
        Self { lexical: v.to_string(), datatype: Datatype::Integer }
    }

    pub fn double(v: f64) -> Self {
        Self { lexical: canonical_double(v), datatype: Datatype::Double }
    }

    pub fn date_time(t: DateTime<Utc>) -> Self {
        Self { lexical: format_timestamp(t), datatype: Datatype::DateTime }
    }

    /// Builds a literal from an arbitrary lexical form, checking it against the datatype.
    pub fn typed(lexical: impl Into<String>, datatype: Datatype) -> Result<Self, RdfError> {
        let lexical = lexical.into();
        let ok = match datatype {
            Datatype::String => true,
            Datatype::Integer => {
                let digits = lexical.strip_prefix(['+', '-']).unwrap_or(&lexical);
                !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())
            }
            Datatype::Double => {
                matches!(lexical.as_str(), "INF" | "-INF" | "+INF" | "NaN")
                    || (lexical.parse::<f64>().is_ok()
                        && !lexical.to_ascii_lowercase().contains("inf")
                        && !lexical.to_ascii_lowercase().contains("nan"))
            }
            Datatype::DateTime => DateTime::parse_from_rfc3339(&lexical).is_ok(),
        };
        if ok {
            Ok(Self { lexical, datatype })
        } else {
            Err(RdfError::InvalidLexical { lexical, datatype: datatype.iri_str().to_owned() })
        }
    }

    pub fn lexical(&self) -> &str {
        &self.lexical
    }

    pub fn datatype(&self) -> Datatype {
        self.datatype
    }
}

/// Shortest round-trip decimal form; always carries a `.` or exponent so the
/// lexical form reads as a double. Non-finite values use the XSD spellings.
pub fn canonical_double(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_owned()
    } else if v.is_infinite() {
        if v > 0.0 { "INF" } else { "-INF" }.to_owned()
    } else {
        format!("{v:?}")
    }
}

/// RFC 3339, second precision, trailing `Z`.
pub fn format_timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Object {
    Iri(Iri),
    Literal(Literal),
}

impl From<Iri> for Object {
    fn from(iri: Iri) -> Self {
        Object::Iri(iri)
    }
}

impl From<Literal> for Object {
    fn from(lit: Literal) -> Self {
        Object::Literal(lit)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub subject: Iri,
    pub predicate: Iri,
    pub object: Object,
}

impl Triple {
    pub fn new(subject: Iri, predicate: Iri, object: impl Into<Object>) -> Self {
        Self { subject, predicate, object: object.into() }
    }

    /// Rough heap footprint, used by the buffer gauges.
    pub fn heap_bytes(&self) -> usize {
        let obj = match &self.object {
            Object::Iri(i) => i.0.capacity(),
            Object::Literal(l) => l.lexical.capacity(),
        };
        std::mem::size_of::<Self>() + self.subject.0.capacity() + self.predicate.0.capacity() + obj
    }
}
