//! N-Triples, Turtle and RDF/XML writers.
//!
//! N-Triples is the hot path: one pass, no lookups. Turtle compacts IRIs
//! against generated prefixes and groups statements by subject, which needs
//! the whole triple set up front. RDF/XML writes one `rdf:Description` per
//! statement after a namespace pass over the predicates.

use std::collections::HashMap;
use std::io::{self, Write};

use crate::rdf::{Datatype, Iri, Literal, Object, Triple, RDF_NS, XSD_NS};

/// Wraps a writer and counts bytes that went through it.
pub struct CountingWriter<W> {
    inner: W,
    written: u64,
}

impl<W: Write> CountingWriter<W> {
    pub fn new(inner: W) -> Self {
        Self { inner, written: 0 }
    }

    pub fn written(&self) -> u64 {
        self.written
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

impl<W: Write> Write for CountingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.written += n as u64;
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RdfFormat {
    NTriples,
    Turtle,
    RdfXml,
}

impl RdfFormat {
    pub const ALL: [RdfFormat; 3] = [RdfFormat::NTriples, RdfFormat::RdfXml, RdfFormat::Turtle];

    pub fn name(self) -> &'static str {
        match self {
            RdfFormat::NTriples => "n-triples",
            RdfFormat::Turtle => "turtle",
            RdfFormat::RdfXml => "rdf/xml",
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            RdfFormat::NTriples => "nt",
            RdfFormat::Turtle => "ttl",
            RdfFormat::RdfXml => "rdf",
        }
    }
}

pub fn serialize<W: Write>(format: RdfFormat, triples: &[Triple], sink: W) -> io::Result<u64> {
    match format {
        RdfFormat::NTriples => write_ntriples(triples, sink),
        RdfFormat::Turtle => write_turtle(triples, sink),
        RdfFormat::RdfXml => write_rdfxml(triples, sink),
    }
}

// ---------------------------------------------------------------- N-Triples

fn write_nt_iri<W: Write>(w: &mut W, iri: &str) -> io::Result<()> {
    w.write_all(b"<")?;
    if iri.bytes().all(|b| b > b' ' && !matches!(b, b'<' | b'>' | b'"' | b'{' | b'}' | b'|' | b'^' | b'`' | b'\\')) {
        w.write_all(iri.as_bytes())?;
    } else {
        for c in iri.chars() {
            if c <= ' ' || matches!(c, '<' | '>' | '"' | '{' | '}' | '|' | '^' | '`' | '\\') {
                write!(w, "\\u{:04X}", c as u32)?;
            } else {
                let mut buf = [0u8; 4];
                w.write_all(c.encode_utf8(&mut buf).as_bytes())?;
            }
        }
    }
    w.write_all(b">")
}

/// STRING_LITERAL_QUOTE escaping: `"`, `\`, LF and CR are mandatory.
fn write_escaped_string<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    let bytes = s.as_bytes();
    let mut start = 0;
    for (i, &b) in bytes.iter().enumerate() {
        let esc: &[u8] = match b {
            b'"' => b"\\\"",
            b'\\' => b"\\\\",
            b'\n' => b"\\n",
            b'\r' => b"\\r",
            _ => continue,
        };
        w.write_all(&bytes[start..i])?;
        w.write_all(esc)?;
        start = i + 1;
    }
    w.write_all(&bytes[start..])
}

fn write_nt_literal<W: Write>(w: &mut W, lit: &Literal) -> io::Result<()> {
    w.write_all(b"\"")?;
    write_escaped_string(w, lit.lexical())?;
    w.write_all(b"\"")?;
    if lit.datatype() != Datatype::String {
        w.write_all(b"^^")?;
        write_nt_iri(w, lit.datatype().iri_str())?;
    }
    Ok(())
}

/// Writes one statement per line; returns bytes written.
pub fn write_ntriples<W: Write>(triples: &[Triple], sink: W) -> io::Result<u64> {
    let mut w = CountingWriter::new(io::BufWriter::with_capacity(1 << 16, sink));
    for t in triples {
        write_nt_triple(&mut w, t)?;
    }
    w.flush()?;
    Ok(w.written())
}

pub fn write_nt_triple<W: Write>(w: &mut W, t: &Triple) -> io::Result<()> {
    write_nt_iri(w, t.subject.as_str())?;
    w.write_all(b" ")?;
    write_nt_iri(w, t.predicate.as_str())?;
    w.write_all(b" ")?;
    match &t.object {
        Object::Iri(i) => write_nt_iri(w, i.as_str())?,
        Object::Literal(l) => write_nt_literal(w, l)?,
    }
    w.write_all(b" .\n")
}

pub fn ntriples_string(triples: &[Triple]) -> String {
    let mut buf = Vec::new();
    write_ntriples(triples, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("serializer emits UTF-8")
}

// ---------------------------------------------------------------- Turtle

/// Splits after the last `#` or `/`.
fn split_namespace(iri: &str) -> (&str, &str) {
    match iri.rfind(['#', '/']) {
        Some(i) => iri.split_at(i + 1),
        None => ("", iri),
    }
}

fn is_pn_chars_base(c: char) -> bool {
    c.is_ascii_alphabetic()
        || matches!(c as u32,
            0xC0..=0xD6 | 0xD8..=0xF6 | 0xF8..=0x2FF | 0x370..=0x37D | 0x37F..=0x1FFF | 0x200C..=0x200D
            | 0x2070..=0x218F | 0x2C00..=0x2FEF | 0x3001..=0xD7FF | 0xF900..=0xFDCF | 0xFDF0..=0xFFFD
            | 0x10000..=0xEFFFF)
}

fn is_pn_chars(c: char) -> bool {
    is_pn_chars_base(c)
        || c == '_'
        || c == '-'
        || c.is_ascii_digit()
        || matches!(c as u32, 0xB7 | 0x300..=0x36F | 0x203F..=0x2040)
}

/// Whether `local` can be written verbatim as a PN_LOCAL (no escapes, no
/// percent sequences, no trailing dot).
fn is_simple_pn_local(local: &str) -> bool {
    let mut chars = local.chars();
    let Some(first) = chars.next() else {
        return true;
    };
    if !(is_pn_chars_base(first) || first == '_' || first.is_ascii_digit()) {
        return false;
    }
    if local.ends_with('.') {
        return false;
    }
    chars.all(|c| is_pn_chars(c) || c == '.')
}

struct PrefixTable {
    by_ns: HashMap<String, String>,
    ordered: Vec<(String, String)>,
}

impl PrefixTable {
    fn build(triples: &[Triple]) -> Self {
        let mut table = Self { by_ns: HashMap::new(), ordered: Vec::new() };
        table.add(RDF_NS, "rdf");
        table.add(XSD_NS, "xsd");
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut order: Vec<&str> = Vec::new();
        for t in triples {
            let obj = match &t.object {
                Object::Iri(o) => Some(o.as_str()),
                Object::Literal(_) => None,
            };
            for iri in [Some(t.subject.as_str()), Some(t.predicate.as_str()), obj].into_iter().flatten() {
                let (ns, local) = split_namespace(iri);
                if ns.is_empty() || !is_simple_pn_local(local) {
                    continue;
                }
                let entry = counts.entry(ns).or_insert(0);
                if *entry == 0 {
                    order.push(ns);
                }
                *entry += 1;
            }
        }
        for ns in order {
            if counts[ns] >= 2 && !table.by_ns.contains_key(ns) {
                let name = format!("ns{}", table.ordered.len() - 2);
                table.add(ns, &name);
            }
        }
        table
    }

    fn add(&mut self, ns: &str, prefix: &str) {
        self.by_ns.insert(ns.to_owned(), prefix.to_owned());
        self.ordered.push((prefix.to_owned(), ns.to_owned()));
    }

    fn write_term<W: Write>(&self, w: &mut W, iri: &str) -> io::Result<()> {
        let (ns, local) = split_namespace(iri);
        if let Some(prefix) = self.by_ns.get(ns) {
            if is_simple_pn_local(local) {
                w.write_all(prefix.as_bytes())?;
                w.write_all(b":")?;
                return w.write_all(local.as_bytes());
            }
        }
        write_nt_iri(w, iri)
    }
}

fn write_ttl_object<W: Write>(w: &mut W, prefixes: &PrefixTable, o: &Object) -> io::Result<()> {
    match o {
        Object::Iri(i) => prefixes.write_term(w, i.as_str()),
        Object::Literal(l) => {
            w.write_all(b"\"")?;
            write_escaped_string(w, l.lexical())?;
            w.write_all(b"\"")?;
            if l.datatype() != Datatype::String {
                w.write_all(b"^^")?;
                prefixes.write_term(w, l.datatype().iri_str())?;
            }
            Ok(())
        }
    }
}

/// Prefix-compacted Turtle with `;` / `,` abbreviation per subject.
pub fn write_turtle<W: Write>(triples: &[Triple], sink: W) -> io::Result<u64> {
    let mut w = CountingWriter::new(io::BufWriter::with_capacity(1 << 16, sink));
    let prefixes = PrefixTable::build(triples);
    for (prefix, ns) in &prefixes.ordered {
        writeln!(w, "@prefix {prefix}: <{ns}> .")?;
    }
    if !triples.is_empty() {
        w.write_all(b"\n")?;
    }

    let mut order: Vec<usize> = (0..triples.len()).collect();
    order.sort_by(|&a, &b| {
        let (ta, tb) = (&triples[a], &triples[b]);
        ta.subject.cmp(&tb.subject).then_with(|| ta.predicate.cmp(&tb.predicate)).then(a.cmp(&b))
    });

    let rdf_type = crate::rdf::RDF_TYPE;
    let mut prev: Option<(&Iri, &Iri)> = None;
    for &i in &order {
        let t = &triples[i];
        match prev {
            Some((s, p)) if *s == t.subject && *p == t.predicate => w.write_all(b" ,\n        ")?,
            Some((s, _)) if *s == t.subject => {
                w.write_all(b" ;\n    ")?;
                write_predicate(&mut w, &prefixes, t.predicate.as_str(), rdf_type)?;
                w.write_all(b" ")?;
            }
            _ => {
                if prev.is_some() {
                    w.write_all(b" .\n\n")?;
                }
                prefixes.write_term(&mut w, t.subject.as_str())?;
                w.write_all(b"\n    ")?;
                write_predicate(&mut w, &prefixes, t.predicate.as_str(), rdf_type)?;
                w.write_all(b" ")?;
            }
        }
        write_ttl_object(&mut w, &prefixes, &t.object)?;
        prev = Some((&t.subject, &t.predicate));
    }
    if prev.is_some() {
        w.write_all(b" .\n")?;
    }
    w.flush()?;
    Ok(w.written())
}

fn write_predicate<W: Write>(w: &mut W, prefixes: &PrefixTable, p: &str, rdf_type: &str) -> io::Result<()> {
    if p == rdf_type {
        w.write_all(b"a")
    } else {
        prefixes.write_term(w, p)
    }
}

// ---------------------------------------------------------------- RDF/XML

fn is_ncname(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_')
        && chars.all(|c| c.is_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

fn write_xml_escaped<W: Write>(w: &mut W, s: &str, attr: bool) -> io::Result<()> {
    let bytes = s.as_bytes();
    let mut start = 0;
    for (i, &b) in bytes.iter().enumerate() {
        let esc: &[u8] = match b {
            b'&' => b"&amp;",
            b'<' => b"&lt;",
            b'>' => b"&gt;",
            b'"' if attr => b"&quot;",
            b'\r' => b"&#xD;",
            b'\n' if attr => b"&#xA;",
            b'\t' if attr => b"&#x9;",
            _ => continue,
        };
        w.write_all(&bytes[start..i])?;
        w.write_all(esc)?;
        start = i + 1;
    }
    w.write_all(&bytes[start..])
}

/// Standard RDF/XML; fails with `InvalidInput` if a predicate cannot be
/// split into namespace + NCName.
pub fn write_rdfxml<W: Write>(triples: &[Triple], sink: W) -> io::Result<u64> {
    let mut w = CountingWriter::new(io::BufWriter::with_capacity(1 << 16, sink));

    let mut namespaces: Vec<&str> = Vec::new();
    let mut ns_index: HashMap<&str, usize> = HashMap::new();
    let mut qnames: Vec<(usize, &str)> = Vec::with_capacity(triples.len());
    for t in triples {
        let p = t.predicate.as_str();
        let (ns, local) = split_namespace(p);
        if ns.is_empty() || !is_ncname(local) {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, format!("predicate <{p}> has no XML QName")));
        }
        let idx = *ns_index.entry(ns).or_insert_with(|| {
            namespaces.push(ns);
            namespaces.len() - 1
        });
        qnames.push((idx, local));
    }

    w.write_all(b"<?xml version=\"1.0\" encoding=\"utf-8\"?>\n<rdf:RDF xmlns:rdf=\"")?;
    w.write_all(RDF_NS.as_bytes())?;
    w.write_all(b"\"")?;
    for (i, ns) in namespaces.iter().enumerate() {
        write!(w, "\n   xmlns:ns{i}=\"")?;
        write_xml_escaped(&mut w, ns, true)?;
        w.write_all(b"\"")?;
    }
    w.write_all(b">\n")?;

    for (t, (idx, local)) in triples.iter().zip(qnames) {
        w.write_all(b"  <rdf:Description rdf:about=\"")?;
        write_xml_escaped(&mut w, t.subject.as_str(), true)?;
        write!(w, "\">\n    <ns{idx}:{local}")?;
        match &t.object {
            Object::Iri(o) => {
                w.write_all(b" rdf:resource=\"")?;
                write_xml_escaped(&mut w, o.as_str(), true)?;
                w.write_all(b"\"/>\n")?;
            }
            Object::Literal(l) => {
                if l.datatype() != Datatype::String {
                    w.write_all(b" rdf:datatype=\"")?;
                    w.write_all(l.datatype().iri_str().as_bytes())?;
                    w.write_all(b"\"")?;
                }
                w.write_all(b">")?;
                write_xml_escaped(&mut w, l.lexical(), false)?;
                write!(w, "</ns{idx}:{local}>\n")?;
            }
        }
        w.write_all(b"  </rdf:Description>\n")?;
    }
    w.write_all(b"</rdf:RDF>\n")?;
    w.flush()?;
    Ok(w.written())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iri(s: &str) -> Iri {
        Iri::parse(s).unwrap()
    }

    #[test]
    fn empty_ntriples_is_zero_bytes() {
        let mut out = Vec::new();
        assert_eq!(write_ntriples(&[], &mut out).unwrap(), 0);
        assert!(out.is_empty());
    }

    #[test]
    fn double_literal_line() {
        let t = Triple::new(iri("http://e/s"), iri("http://e/p"), Literal::double(42.0));
        assert_eq!(
            ntriples_string(&[t]),
            "<http://e/s> <http://e/p> \"42.0\"^^<http://www.w3.org/2001/XMLSchema#double> .\n"
        );
    }

    #[test]
    fn string_escapes() {
        let t = Triple::new(iri("http://e/s"), iri("http://e/p"), Literal::string("say \"hi\"\nback\\slash\r"));
        assert_eq!(ntriples_string(&[t]), "<http://e/s> <http://e/p> \"say \\\"hi\\\"\\nback\\\\slash\\r\" .\n");
    }

    #[test]
    fn pn_local_rules() {
        assert!(is_simple_pn_local("r241"));
        assert!(is_simple_pn_local("2022"));
        assert!(is_simple_pn_local("a.b"));
        assert!(!is_simple_pn_local("a."));
        assert!(!is_simple_pn_local("node%2042"));
        assert!(!is_simple_pn_local("-x"));
    }

    #[test]
    fn turtle_groups_subjects() {
        let s = iri("http://e.org/r/s1");
        let ts = vec![
            Triple::new(s.clone(), iri("http://e.org/o#p"), Literal::integer(1)),
            Triple::new(iri("http://e.org/r/s2"), iri("http://e.org/o#p"), Literal::integer(2)),
            Triple::new(s.clone(), iri("http://e.org/o#p"), Literal::integer(3)),
            Triple::new(s, iri(crate::rdf::RDF_TYPE), iri("http://e.org/o#C")),
        ];
        let mut out = Vec::new();
        write_turtle(&ts, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.contains("ns0:s1\n    ns1:p \"1\"^^xsd:integer ,\n        \"3\"^^xsd:integer ;\n    a ns1:C ."), "{text}");
    }

    #[test]
    fn xml_rejects_unsplittable_predicate() {
        let t = Triple::new(iri("http://e/s"), iri("http://e/1p"), Literal::integer(1));
        assert!(write_rdfxml(&[t], Vec::new()).is_err());
    }
}
