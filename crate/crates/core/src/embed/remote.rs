//! Vendor-neutral remote embedding protocol.
//!
//! `POST {endpoint}/embed` with body `{"provider_id": "...", "texts": ["...", ...]}`;
//! a 200 response carries `{"dimension": d, "embeddings": [[...], ...]}` with one
//! row per text, in request order. Any other status is a failure.

pub mod stub;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textprep::TokenSequence;

use super::{EmbedError, EmbeddingProvider};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RemoteError {
    #[error("no texts to embed")]
    EmptyInput,
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("server returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response body: {0}")]
    Malformed(String),
    #[error("count mismatch: sent {expected} texts, received {got} embeddings")]
    CountMismatch { expected: usize, got: usize },
    #[error("dimension mismatch at row {index}: expected {expected}, got {got}")]
    DimensionMismatch { index: usize, expected: usize, got: usize },
}

impl RemoteError {
    fn is_retryable(&self) -> bool {
        matches!(self, RemoteError::Transport(_) | RemoteError::Timeout | RemoteError::Status { .. })
    }
}

#[derive(Debug, Serialize)]
struct EmbedRequest<'a> {
    provider_id: &'a str,
    texts: &'a [String],
}

#[derive(Debug, Deserialize)]
struct EmbedResponse {
    dimension: usize,
    embeddings: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    pub endpoint: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    /// Name of the environment variable holding a bearer token. The token is never logged.
    #[serde(default)]
    pub auth_token_env: Option<String>,
}

fn default_timeout_ms() -> u64 {
    30_000
}
fn default_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    200
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout_ms: default_timeout_ms(),
            retries: default_retries(),
            backoff_ms: default_backoff_ms(),
            auth_token_env: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteResponse {
    pub dimension: usize,
    pub embeddings: Vec<Vec<f64>>,
    /// Total requests sent, including the successful one.
    pub attempts: u32,
}

impl RemoteResponse {
    pub fn retries(&self) -> u32 {
        self.attempts - 1
    }
}

/// Sends `texts` to the endpoint, retrying transport failures, timeouts and
/// non-200 statuses up to `config.retries` times with exponential backoff.
/// Protocol violations (bad body, count or dimension mismatch) fail at once.
pub fn remote_embed(config: &RemoteConfig, provider_id: &str, texts: &[String]) -> Result<RemoteResponse, RemoteError> {
    if texts.is_empty() {
        return Err(RemoteError::EmptyInput);
    }
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_millis(config.timeout_ms))
        .build()
        .map_err(|e| RemoteError::Transport(e.to_string()))?;
    let url = format!("{}/embed", config.endpoint.trim_end_matches('/'));
    let token = config.auth_token_env.as_deref().and_then(|name| std::env::var(name).ok());

    let mut attempts = 0;
    loop {
        attempts += 1;
        match send_once(&client, &url, token.as_deref(), provider_id, texts) {
            Ok(response) => {
                let (dimension, embeddings) = validate(response, texts.len())?;
                return Ok(RemoteResponse { dimension, embeddings, attempts });
            }
            Err(e) if e.is_retryable() && attempts <= config.retries => {
                let wait = config.backoff_ms.saturating_mul(1 << (attempts - 1).min(16));
                log::warn!("remote embed attempt {attempts} failed ({e}); retrying in {wait} ms");
                std::thread::sleep(Duration::from_millis(wait));
            }
            Err(e) => return Err(e),
        }
    }
}

fn send_once(
    client: &reqwest::blocking::Client,
    url: &str,
    token: Option<&str>,
    provider_id: &str,
    texts: &[String],
) -> Result<EmbedResponse, RemoteError> {
    let body = serde_json::to_vec(&EmbedRequest { provider_id, texts }).expect("request serializes");
    let mut request = client
        .post(url)
        .header(reqwest::header::CONTENT_TYPE, "application/json")
        .body(body);
    if let Some(token) = token {
        request = request.bearer_auth(token);
    }
    let response = request.send().map_err(classify_reqwest)?;
    let status = response.status().as_u16();
    let bytes = response.bytes().map_err(classify_reqwest)?;
    if status != 200 {
        let body = String::from_utf8_lossy(&bytes).chars().take(200).collect();
        return Err(RemoteError::Status { status, body });
    }
    serde_json::from_slice(&bytes).map_err(|e| RemoteError::Malformed(e.to_string()))
}

fn classify_reqwest(e: reqwest::Error) -> RemoteError {
    if e.is_timeout() {
        RemoteError::Timeout
    } else {
        RemoteError::Transport(e.to_string())
    }
}

fn validate(response: EmbedResponse, expected: usize) -> Result<(usize, Vec<Vec<f64>>), RemoteError> {
    if response.embeddings.len() != expected {
        return Err(RemoteError::CountMismatch { expected, got: response.embeddings.len() });
    }
    for (index, row) in response.embeddings.iter().enumerate() {
        if row.len() != response.dimension {
            return Err(RemoteError::DimensionMismatch { index, expected: response.dimension, got: row.len() });
        }
    }
    Ok((response.dimension, response.embeddings))
}

/// Provider backed by a remote endpoint; each chunk is sent as one text.
#[derive(Debug, Clone)]
pub struct RemoteProvider {
    provider_id: String,
    dimension: usize,
    config: RemoteConfig,
}

impl RemoteProvider {
    pub fn new(provider_id: impl Into<String>, dimension: usize, config: RemoteConfig) -> Self {
        Self { provider_id: provider_id.into(), dimension, config }
    }

    /// Embeds several texts in one request, checking the declared dimension.
    pub fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let response = remote_embed(&self.config, &self.provider_id, texts)?;
        if response.dimension != self.dimension {
            return Err(EmbedError::Dimension { expected: self.dimension, got: response.dimension });
        }
        Ok(response.embeddings)
    }
}

impl EmbeddingProvider for RemoteProvider {
    fn provider_id(&self) -> &str {
        &self.provider_id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_chunk(&self, chunk: &TokenSequence) -> Result<Vec<f64>, EmbedError> {
        let mut rows = self.embed_texts(&[chunk.text()])?;
        Ok(rows.pop().expect("count validated"))
    }
}
