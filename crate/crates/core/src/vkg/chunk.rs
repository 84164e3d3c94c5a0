//! Bounded-memory emission: triples are buffered up to a batch size, then
//! written as one N-Triples chunk file.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use indexmap::IndexSet;
use sha2::{Digest, Sha256};

use super::serialize::write_ntriples;
use crate::rdf::{Iri, Triple};

pub const DEFAULT_BATCH: usize = 500_000;

/// Receives triples one at a time.
pub trait TripleSink {
    fn push(&mut self, triple: Triple) -> io::Result<()>;
}

impl TripleSink for Vec<Triple> {
    fn push(&mut self, triple: Triple) -> io::Result<()> {
        Vec::push(self, triple);
        Ok(())
    }
}

/// Graph-style sink: per-triple set insertion.
impl TripleSink for IndexSet<Triple> {
    fn push(&mut self, triple: Triple) -> io::Result<()> {
        self.insert(triple);
        Ok(())
    }
}

/// Current and high-water triple-buffer occupancy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BufferGauge {
    pub triples: usize,
    pub bytes: usize,
    pub peak_triples: usize,
    pub peak_bytes: usize,
}

impl BufferGauge {
    pub fn add(&mut self, t: &Triple) {
        self.triples += 1;
        self.bytes += t.heap_bytes();
        self.peak_triples = self.peak_triples.max(self.triples);
        self.peak_bytes = self.peak_bytes.max(self.bytes);
    }

    pub fn clear(&mut self) {
        self.triples = 0;
        self.bytes = 0;
    }
}

/// Unbounded buffer with a gauge, the baseline the chunked emitter is
/// measured against.
#[derive(Debug, Default)]
pub struct GaugedBuffer {
    pub triples: Vec<Triple>,
    pub gauge: BufferGauge,
}

impl TripleSink for GaugedBuffer {
    fn push(&mut self, triple: Triple) -> io::Result<()> {
        self.gauge.add(&triple);
        self.triples.push(triple);
        Ok(())
    }
}

/// Chunk file stem for a graph: first 16 hex digits of SHA-256 of the IRI.
pub fn graph_hash(graph: &Iri) -> String {
    hex::encode(&Sha256::digest(graph.as_str().as_bytes())[..8])
}

pub fn chunk_path(dir: &Path, graph: &Iri, index: usize) -> PathBuf {
    dir.join(format!("{}.{index:05}.nt", graph_hash(graph)))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkFile {
    pub path: PathBuf,
    pub triples: usize,
    pub bytes: u64,
}

pub struct ChunkedEmitter {
    dir: PathBuf,
    graph: Iri,
    batch: usize,
    buf: Vec<Triple>,
    chunks: Vec<ChunkFile>,
    gauge: BufferGauge,
}

impl ChunkedEmitter {
    pub fn new(dir: impl Into<PathBuf>, graph: Iri, batch: usize) -> io::Result<Self> {
        if batch == 0 {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, "batch size must be at least 1"));
        }
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir, graph, batch, buf: Vec::with_capacity(batch.min(1 << 16)), chunks: Vec::new(), gauge: BufferGauge::default() })
    }

    pub fn gauge(&self) -> BufferGauge {
        self.gauge
    }

    fn flush(&mut self) -> io::Result<()> {
        if self.buf.is_empty() {
            return Ok(());
        }
        let path = chunk_path(&self.dir, &self.graph, self.chunks.len());
        let mut w = BufWriter::new(File::create(&path)?);
        let bytes = write_ntriples(&self.buf, &mut w)?;
        w.flush()?;
        self.chunks.push(ChunkFile { path, triples: self.buf.len(), bytes });
        self.buf.clear();
        self.gauge.clear();
        Ok(())
    }

    /// Writes the tail chunk and returns every chunk in order.
    pub fn finish(mut self) -> io::Result<(Vec<ChunkFile>, BufferGauge)> {
        self.flush()?;
        Ok((self.chunks, self.gauge))
    }
}

impl TripleSink for ChunkedEmitter {
    fn push(&mut self, triple: Triple) -> io::Result<()> {
        self.gauge.add(&triple);
        self.buf.push(triple);
        if self.buf.len() >= self.batch {
            self.flush()?;
        }
        Ok(())
    }
}

/// Emits `triples` through a [`ChunkedEmitter`].
pub fn chunked_emit(
    triples: impl IntoIterator<Item = Triple>,
    dir: &Path,
    graph: &Iri,
    batch: usize,
) -> io::Result<(Vec<ChunkFile>, BufferGauge)> {
    let mut em = ChunkedEmitter::new(dir, graph.clone(), batch)?;
    for t in triples {
        em.push(t)?;
    }
    em.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rdf::Literal;

    fn triples(n: usize) -> Vec<Triple> {
        (0..n)
            .map(|i| {
                Triple::new(
                    Iri::parse(format!("http://x/s{i}")).unwrap(),
                    Iri::parse("http://x/p").unwrap(),
                    Literal::integer(i as i64),
                )
            })
            .collect()
    }

    #[test]
    fn ten_by_four() {
        let dir = tempfile::tempdir().unwrap();
        let g = Iri::parse("http://g/1").unwrap();
        let (chunks, gauge) = chunked_emit(triples(10), dir.path(), &g, 4).unwrap();
        assert_eq!(chunks.iter().map(|c| c.triples).collect::<Vec<_>>(), [4, 4, 2]);
        assert_eq!(gauge.peak_triples, 4);
        assert!(chunks[2].path.to_string_lossy().ends_with(".00002.nt"));
        let lines: usize = chunks.iter().map(|c| std::fs::read_to_string(&c.path).unwrap().lines().count()).sum();
        assert_eq!(lines, 10);
    }

    #[test]
    fn empty_stream_no_chunks() {
        let dir = tempfile::tempdir().unwrap();
        let g = Iri::parse("http://g/1").unwrap();
        let (chunks, _) = chunked_emit(Vec::new(), dir.path(), &g, 4).unwrap();
        assert!(chunks.is_empty());
    }

    #[test]
    fn zero_batch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(ChunkedEmitter::new(dir.path(), Iri::parse("http://g").unwrap(), 0).is_err());
    }
}
