//! OpenAI-compatible chat completions client.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{GeneratedQuery, Prompt, QuerySource, SparqlError};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationMode {
    Llm,
    #[default]
    Template,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub mode: GenerationMode,
    pub endpoint: Option<String>,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: Option<String>,
    pub timeout_ms: u64,
    pub fewshot_k: usize,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            mode: GenerationMode::Template,
            endpoint: None,
            model: "llama-3.1-8b-instruct".into(),
            api_key_env: None,
            timeout_ms: 60_000,
            fewshot_k: 4,
        }
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f32,
    n: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    #[serde(default)]
    choices: Vec<Choice>,
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    prompt_tokens: Option<u32>,
    completion_tokens: Option<u32>,
}

pub struct LlmClient {
    url: String,
    model: String,
    api_key: Option<String>,
    timeout: Duration,
    http: reqwest::Client,
}

impl LlmClient {
    pub fn new(endpoint: &str, model: &str, api_key: Option<String>, timeout: Duration) -> Result<Self, SparqlError> {
        let http = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| SparqlError::LlmProtocol(e.to_string()))?;
        Ok(Self {
            url: format!("{}/chat/completions", endpoint.trim_end_matches('/')),
            model: model.to_owned(),
            api_key,
            timeout,
            http,
        })
    }

    pub fn from_config(cfg: &LlmConfig) -> Result<Self, SparqlError> {
        let endpoint = cfg
            .endpoint
            .as_deref()
            .ok_or_else(|| SparqlError::LlmUnreachable { message: "llm.endpoint is not set".into(), retry_after: None })?;
        let key = cfg.api_key_env.as_deref().and_then(|v| std::env::var(v).ok());
        Self::new(endpoint, &cfg.model, key, Duration::from_millis(cfg.timeout_ms))
    }

    /// Sends the prompt as system + alternating few-shot turns + question.
    pub async fn complete(&self, prompt: &Prompt) -> Result<GeneratedQuery, SparqlError> {
        let mut messages = vec![ChatMessage { role: "system", content: &prompt.system }];
        for s in &prompt.fewshots {
            messages.push(ChatMessage { role: "user", content: &s.question });
            messages.push(ChatMessage { role: "assistant", content: &s.sparql });
        }
        messages.push(ChatMessage { role: "user", content: &prompt.question });
        let body = ChatRequest { model: &self.model, messages, temperature: 0.0, n: 1 };

        let t0 = Instant::now();
        let mut req = self.http.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().await.map_err(|e| self.send_error(e))?;
        let status = resp.status();
        if !status.is_success() {
            let retry_after = resp
                .headers()
                .get(reqwest::header::RETRY_AFTER)
                .and_then(|v| v.to_str().ok())
                .map(str::to_owned);
            let text = resp.text().await.unwrap_or_default();
            return Err(SparqlError::LlmUnreachable { message: format!("HTTP {status}: {text}"), retry_after });
        }
        let parsed: ChatResponse = resp.json().await.map_err(|e| {
            if e.is_timeout() {
                SparqlError::LlmTimeout(self.timeout)
            } else {
                SparqlError::LlmProtocol(e.to_string())
            }
        })?;
        let latency = t0.elapsed();
        let raw = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .filter(|c| !c.trim().is_empty())
            .ok_or(SparqlError::EmptyCompletion)?;
        let usage = parsed.usage;
        Ok(GeneratedQuery {
            raw,
            source: QuerySource::Llm,
            latency,
            tokens_in: usage.as_ref().and_then(|u| u.prompt_tokens),
            tokens_out: usage.as_ref().and_then(|u| u.completion_tokens),
            archetype: None,
        })
    }

    fn send_error(&self, e: reqwest::Error) -> SparqlError {
        if e.is_timeout() {
            SparqlError::LlmTimeout(self.timeout)
        } else {
            SparqlError::LlmUnreachable { message: e.to_string(), retry_after: None }
        }
    }

    pub async fn ping(&self) -> bool {
        let models = self.url.trim_end_matches("/chat/completions").to_owned() + "/models";
        self.http.get(models).send().await.is_ok()
    }
}
