//! SPARQL generation: prompt assembly, an OpenAI-compatible chat client and
//! the deterministic template engine.

pub mod llm;
pub mod template;

use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use crate::entities::EntityMap;
use crate::ontology::Vocabulary;
pub use llm::{LlmClient, LlmConfig};
pub use template::{detect_archetype, generate_template, Archetype};

#[derive(Debug, thiserror::Error)]
pub enum SparqlError {
    #[error("no archetype matches the question")]
    UnsupportedArchetype,
    #[error("question lacks the {0} parameter")]
    MissingParameter(&'static str),
    #[error("template: {0}")]
    Template(String),
    #[error("requested {k} few-shot examples, only {available} available")]
    InsufficientFewshots { k: usize, available: usize },
    #[error("LLM endpoint unreachable: {message}")]
    LlmUnreachable { message: String, retry_after: Option<String> },
    #[error("LLM request timed out after {0:?}")]
    LlmTimeout(Duration),
    #[error("LLM returned an empty completion")]
    EmptyCompletion,
    #[error("LLM protocol error: {0}")]
    LlmProtocol(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShot {
    pub question: String,
    pub sparql: String,
}

/// One worked example per family: topology, job lookup, reading
/// aggregation, job-window aggregation.
pub fn default_fewshots() -> Vec<FewShot> {
    let p = "PREFIX oda: <https://oda.example/ontology#>\nPREFIX xsd: <http://www.w3.org/2001/XMLSchema#>\n";
    let shot = |q: &str, body: &str| FewShot { question: q.into(), sparql: format!("{p}{body}") };
    vec![
        shot(
            "Which nodes are present in the rack r201, and what are their positions?",
            "SELECT ?node ?position WHERE {\n  <https://oda.example/resource/rack/r201> oda:containsNode ?n .\n  ?n oda:nodeName ?node ;\n     oda:position ?position .\n}\nORDER BY ?position",
        ),
        shot(
            "What were the nodes used by the job 100012?",
            "SELECT ?node WHERE {\n  <https://oda.example/resource/job/100012> oda:usedNode ?n .\n  ?n oda:nodeName ?node .\n}",
        ),
        shot(
            "What is the average total_power of node node03 between 2022-02-03 00:00:00 and 2022-02-03 04:00:00?",
            "SELECT (AVG(?v) AS ?average) WHERE {\n  <https://oda.example/resource/node/node03> oda:hasPlugin ?p .\n  ?p oda:hasSensor ?sensor .\n  ?sensor oda:metricName \"total_power\" ;\n     oda:hasReading ?r .\n  ?r oda:value ?v ;\n     oda:timestamp ?t .\n  FILTER(?t >= \"2022-02-03T00:00:00Z\"^^xsd:dateTime && ?t < \"2022-02-03T04:00:00Z\"^^xsd:dateTime)\n}",
        ),
        shot(
            "How many jobs were running on the rack r200 between 2022-02-10 00:00:00 and 2022-02-10 12:00:00?",
            "SELECT (COUNT(DISTINCT ?j) AS ?jobs) WHERE {\n  <https://oda.example/resource/rack/r200> oda:containsNode ?n .\n  ?j a oda:Job ;\n     oda:usedNode ?n ;\n     oda:startTime ?s ;\n     oda:endTime ?e .\n  FILTER(?s < \"2022-02-10T12:00:00Z\"^^xsd:dateTime && ?e > \"2022-02-10T00:00:00Z\"^^xsd:dateTime)\n}",
        ),
    ]
}

const INSTRUCTIONS: &str = "Translate the question into one SPARQL 1.1 SELECT query over the ontology below. \
Timestamps are xsd:dateTime in UTC. Answer with the query only.";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub system: String,
    pub fewshots: Vec<FewShot>,
    pub question: String,
    pub token_estimate: u32,
}

impl Prompt {
    /// Single-text rendering, for logs and token estimates.
    pub fn render(&self) -> String {
        let mut out = self.system.clone();
        for s in &self.fewshots {
            out.push_str("\n\nQ: ");
            out.push_str(&s.question);
            out.push_str("\nA:\n");
            out.push_str(&s.sparql);
        }
        out.push_str("\n\nQ: ");
        out.push_str(&self.question);
        out.push_str("\nA:\n");
        out
    }
}

/// Four characters per token, rounded up, at least one.
pub fn estimate_tokens(text: &str) -> u32 {
    (text.chars().count().div_ceil(4)).max(1) as u32
}

pub fn assemble_prompt(question: &str, ontology_text: &str, fewshots: &[FewShot], k: usize) -> Result<Prompt, SparqlError> {
    if k > fewshots.len() {
        return Err(SparqlError::InsufficientFewshots { k, available: fewshots.len() });
    }
    let mut prompt = Prompt {
        system: format!("{INSTRUCTIONS}\n\n{ontology_text}"),
        fewshots: fewshots[..k].to_vec(),
        question: question.to_owned(),
        token_estimate: 0,
    };
    prompt.token_estimate = estimate_tokens(&prompt.render());
    Ok(prompt)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuerySource {
    Llm,
    Template,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedQuery {
    pub raw: String,
    pub source: QuerySource,
    pub latency: Duration,
    pub tokens_in: Option<u32>,
    pub tokens_out: Option<u32>,
    pub archetype: Option<Archetype>,
}

#[async_trait]
pub trait QueryGenerator: Send + Sync {
    async fn generate(&self, question: &str, entities: &EntityMap) -> Result<GeneratedQuery, SparqlError>;
}

pub struct TemplateGenerator {
    vocab: Vocabulary,
}

impl TemplateGenerator {
    pub fn new(vocab: Vocabulary) -> Self {
        Self { vocab }
    }
}

#[async_trait]
impl QueryGenerator for TemplateGenerator {
    async fn generate(&self, question: &str, entities: &EntityMap) -> Result<GeneratedQuery, SparqlError> {
        let t0 = Instant::now();
        let (arch, raw) = generate_template(question, entities, &self.vocab)?;
        Ok(GeneratedQuery {
            raw,
            source: QuerySource::Template,
            latency: t0.elapsed(),
            tokens_in: None,
            tokens_out: None,
            archetype: Some(arch),
        })
    }
}

/// Prompt building plus the chat client.
pub struct LlmGenerator {
    client: LlmClient,
    ontology_text: String,
    fewshots: Vec<FewShot>,
    k: usize,
}

impl LlmGenerator {
    pub fn new(client: LlmClient, vocab: &Vocabulary, fewshots: Vec<FewShot>, k: usize) -> Result<Self, SparqlError> {
        if k > fewshots.len() {
            return Err(SparqlError::InsufficientFewshots { k, available: fewshots.len() });
        }
        Ok(Self { client, ontology_text: vocab.context_text(), fewshots, k })
    }

    pub fn client(&self) -> &LlmClient {
        &self.client
    }
}

#[async_trait]
impl QueryGenerator for LlmGenerator {
    async fn generate(&self, question: &str, _entities: &EntityMap) -> Result<GeneratedQuery, SparqlError> {
        let prompt = assemble_prompt(question, &self.ontology_text, &self.fewshots, self.k)?;
        self.client.complete(&prompt).await
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prompt_shapes() {
        let shots = default_fewshots();
        let p0 = assemble_prompt("q?", "ONT", &shots, 0).unwrap();
        assert!(p0.fewshots.is_empty() && p0.render().contains("ONT") && p0.render().ends_with("Q: q?\nA:\n"));
        let p4 = assemble_prompt("q?", "ONT", &shots, 4).unwrap();
        assert_eq!(p4.render().matches("\nQ: ").count(), 5);
        assert_eq!(p4, assemble_prompt("q?", "ONT", &shots, 4).unwrap());
        assert!(p4.token_estimate > p0.token_estimate);
        assert!(matches!(assemble_prompt("q", "", &shots, 5), Err(SparqlError::InsufficientFewshots { .. })));
    }

    #[test]
    fn fewshots_parse() {
        for s in default_fewshots() {
            let _ = oxigraph::sparql::SparqlEvaluator::new().parse_query(&s.sparql).unwrap();
        }
    }

    #[test]
    fn token_estimate() {
        assert_eq!(estimate_tokens(""), 1);
        assert_eq!(estimate_tokens("abcde"), 2);
    }
}
