//! Language-model clients: a chat-completions HTTP client, a replay client
//! answering from recorded transcripts, and a recorder that captures them.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::prompt::Prompt;
use crate::remote::{JsonEndpoint, RateLimiter, RemoteError, RetryPolicy};

pub const LLM_ENDPOINT_ENV: &str = "FORPKG_LLM_ENDPOINT";
pub const LLM_API_KEY_ENV: &str = "FORPKG_LLM_API_KEY";
pub const LLM_MODEL_ENV: &str = "FORPKG_LLM_MODEL";
/// Optional cap on requests per second.
pub const LLM_RATE_ENV: &str = "FORPKG_LLM_RATE_PER_SEC";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error(transparent)]
    Remote(#[from] RemoteError),
    #[error("no recorded response for `{template}` prompt {digest}")]
    Unrecorded { template: String, digest: String },
    #[error("transcript line {line}: {message}")]
    Transcript { line: usize, message: String },
    #[error("{0}")]
    Config(String),
}

pub trait LlmClient: Send + Sync {
    fn complete(&self, prompt: &Prompt) -> Result<String, LlmError>;
}

/// One recorded interaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub digest: String,
    pub template: String,
    pub template_version: String,
    pub prompt: String,
    pub response: String,
}

#[derive(Debug, Clone, Default)]
pub struct ReplayClient {
    records: BTreeMap<String, TranscriptRecord>,
}

impl ReplayClient {
    pub fn from_records(records: impl IntoIterator<Item = TranscriptRecord>) -> Self {
        ReplayClient { records: records.into_iter().map(|r| (r.digest.clone(), r)).collect() }
    }

    pub fn parse(text: &str) -> Result<Self, LlmError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: TranscriptRecord =
                serde_json::from_str(line).map_err(|e| LlmError::Transcript { line: i + 1, message: e.to_string() })?;
            records.push(record);
        }
        Ok(ReplayClient::from_records(records))
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Config(format!("cannot read transcripts {}: {e}", path.display())))?;
        ReplayClient::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl LlmClient for ReplayClient {
    fn complete(&self, prompt: &Prompt) -> Result<String, LlmError> {
        let record = self.records.get(&prompt.digest).ok_or_else(|| LlmError::Unrecorded {
            template: prompt.template_id.clone(),
            digest: prompt.digest.clone(),
        })?;
        if record.prompt != prompt.text {
            log::debug!("prompt text for {} differs from the recording", prompt.digest);
        }
        Ok(record.response.clone())
    }
}

/// Forwards to an inner client and keeps every successful interaction.
pub struct RecordingClient<C> {
    inner: C,
    records: Mutex<BTreeMap<String, TranscriptRecord>>,
}

impl<C: LlmClient> RecordingClient<C> {
    pub fn new(inner: C) -> Self {
        RecordingClient { inner, records: Mutex::new(BTreeMap::new()) }
    }

    /// Recorded interactions ordered by template, then digest.
    pub fn records(&self) -> Vec<TranscriptRecord> {
        let mut out: Vec<_> = self.records.lock().expect("recorder lock").values().cloned().collect();
        out.sort_by(|a, b| (&a.template, &a.digest).cmp(&(&b.template, &b.digest)));
        out
    }

    pub fn write_jsonl(&self, out: &mut impl Write) -> std::io::Result<()> {
        for r in self.records() {
            serde_json::to_writer(&mut *out, &r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

impl<C: LlmClient> LlmClient for RecordingClient<C> {
    fn complete(&self, prompt: &Prompt) -> Result<String, LlmError> {
        let response = self.inner.complete(prompt)?;
        self.records.lock().expect("recorder lock").insert(
            prompt.digest.clone(),
            TranscriptRecord {
                digest: prompt.digest.clone(),
                template: prompt.template_id.clone(),
                template_version: prompt.template_version.clone(),
                prompt: prompt.text.clone(),
                response: response.clone(),
            },
        );
        Ok(response)
    }
}

/// OpenAI-style chat-completions client.
pub struct HttpLlmClient {
    endpoint: JsonEndpoint,
    model: String,
}

impl HttpLlmClient {
    pub fn new(endpoint: JsonEndpoint, model: impl Into<String>) -> Self {
        HttpLlmClient { endpoint, model: model.into() }
    }

    /// Reads endpoint, key and model from the environment.
    pub fn from_env(retry: RetryPolicy) -> Result<Self, LlmError> {
        let url =
            std::env::var(LLM_ENDPOINT_ENV).map_err(|_| LlmError::Config(format!("{LLM_ENDPOINT_ENV} is not set")))?;
        let model = std::env::var(LLM_MODEL_ENV).unwrap_or_else(|_| "default".to_string());
        let mut endpoint = JsonEndpoint::new(url, Duration::from_secs(120)).with_retry(retry);
        if let Ok(key) = std::env::var(LLM_API_KEY_ENV) {
            endpoint = endpoint.with_header("Authorization", format!("Bearer {key}"));
        }
        if let Ok(rate) = std::env::var(LLM_RATE_ENV) {
            let rate: f64 =
                rate.parse().map_err(|_| LlmError::Config(format!("{LLM_RATE_ENV} must be a number, got `{rate}`")))?;
            endpoint = endpoint.with_limiter(Arc::new(RateLimiter::per_second(rate)));
        }
        Ok(HttpLlmClient::new(endpoint, model))
    }
}

impl LlmClient for HttpLlmClient {
    fn complete(&self, prompt: &Prompt) -> Result<String, LlmError> {
        let body = json!({
            "model": self.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt.text}],
        });
        let reply = self.endpoint.post(&body)?;
        reply
            .pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| RemoteError::Malformed("no choices[0].message.content".into()).into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::prompt::{inputs, PromptTemplate};

    struct Echo;
    impl LlmClient for Echo {
        fn complete(&self, prompt: &Prompt) -> Result<String, LlmError> {
            Ok(format!("echo:{}", prompt.inputs["x"]))
        }
    }

    fn prompt(x: &str) -> Prompt {
        PromptTemplate::parse("id: t\nversion: 1\n---\nsay {x}").unwrap().render(inputs([("x", x)])).unwrap()
    }

    #[test]
    fn record_then_replay() {
        let rec = RecordingClient::new(Echo);
        rec.complete(&prompt("b")).unwrap();
        rec.complete(&prompt("a")).unwrap();
        rec.complete(&prompt("a")).unwrap();
        let mut buf = Vec::new();
        rec.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);

        let replay = ReplayClient::parse(&text).unwrap();
        assert_eq!(replay.complete(&prompt("a")).unwrap(), "echo:a");
        assert_eq!(replay.complete(&prompt("b")).unwrap(), "echo:b");
        assert!(matches!(replay.complete(&prompt("c")), Err(LlmError::Unrecorded { .. })));
    }

    #[test]
    fn transcript_errors_carry_line_numbers() {
        let err = ReplayClient::parse("\n{not json}\n").unwrap_err();
        assert!(matches!(err, LlmError::Transcript { line: 2, .. }));
    }
}
