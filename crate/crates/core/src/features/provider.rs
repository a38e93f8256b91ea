//! Embedding providers: a deterministic local feature-hashing encoder for
//! offline runs and tests, and a remote HTTP client speaking the common
//! embeddings wire shape.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use super::{tokenize, EmbeddingVector};

/// Environment variable holding the remote embedding endpoint URL.
pub const EMBED_URL_ENV: &str = "GEMMAS_EMBED_URL";
/// Environment variable holding the bearer token for the remote endpoint.
pub const EMBED_API_KEY_ENV: &str = "GEMMAS_EMBED_API_KEY";

/// Dimension of the built-in local provider.
pub const LOCAL_EMBEDDING_DIM: usize = 256;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmbedError {
    #[error("embedding provider unavailable: {0}")]
    Unavailable(String),
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite embedding value at component {index}")]
    NonFinite { index: usize },
    #[error("malformed embedding response: {0}")]
    MalformedResponse(String),
    #[error("remote provider not configured: {0}")]
    NotConfigured(String),
}

/// A source of dense text embeddings. Implementations must be shareable
/// across concurrent evaluation tasks.
pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;

    /// Embed each text, order-preserving, all vectors of one dimension.
    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError>;
}

/// Which provider an analysis should use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProviderKind {
    #[default]
    Local,
    Remote,
}

/// Instantiate a provider. For [`ProviderKind::Remote`] the URL comes from
/// the explicit argument or the `GEMMAS_EMBED_URL` environment variable.
pub fn build_provider(
    kind: ProviderKind,
    remote_url: Option<&str>,
) -> Result<Box<dyn EmbeddingProvider>, EmbedError> {
    match kind {
        ProviderKind::Local => Ok(Box::new(LocalHashProvider)),
        ProviderKind::Remote => {
            let config = RemoteConfig::resolve(remote_url)?;
            Ok(Box::new(RemoteHttpProvider::new(config)?))
        }
    }
}

/// Deterministic signed feature hashing of the token bag into 256 buckets,
/// L2-normalized. Pure function of the input text: equal inputs give equal
/// vectors across processes and platforms.
pub struct LocalHashProvider;

/// FNV-1a, fixed 64-bit constants. Used instead of the std hasher so bucket
/// assignment never depends on the Rust release.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

impl EmbeddingProvider for LocalHashProvider {
    fn name(&self) -> &str {
        "local-hash"
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        texts
            .iter()
            .map(|text| {
                let mut values = vec![0.0f64; LOCAL_EMBEDDING_DIM];
                for token in tokenize(text) {
                    let hash = fnv1a64(token.as_bytes());
                    let bucket = (hash % LOCAL_EMBEDDING_DIM as u64) as usize;
                    let sign = if (hash >> 8) & 1 == 0 { 1.0 } else { -1.0 };
                    values[bucket] += sign;
                }
                let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    for v in &mut values {
                        *v /= norm;
                    }
                }
                EmbeddingVector::new(values)
            })
            .collect()
    }
}

/// Configuration for the remote HTTP provider.
#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub url: String,
    /// Model name sent in the request body.
    pub model: String,
    /// Bearer token; sent as `Authorization: Bearer <key>` when present.
    pub api_key: Option<String>,
    pub timeout: Duration,
    /// Cap on concurrent in-flight requests.
    pub max_in_flight: usize,
}

impl RemoteConfig {
    pub fn new(url: impl Into<String>) -> Self {
        RemoteConfig {
            url: url.into(),
            model: "default".to_string(),
            api_key: std::env::var(EMBED_API_KEY_ENV).ok(),
            timeout: Duration::from_secs(30),
            max_in_flight: 4,
        }
    }

    /// Resolve the endpoint from the CLI-provided URL or the environment.
    pub fn resolve(url_override: Option<&str>) -> Result<Self, EmbedError> {
        let url = match url_override {
            Some(u) => u.to_string(),
            None => std::env::var(EMBED_URL_ENV).map_err(|_| {
                EmbedError::NotConfigured(format!(
                    "pass --remote-url or set {EMBED_URL_ENV}"
                ))
            })?,
        };
        Ok(RemoteConfig::new(url))
    }
}

/// Remote embeddings over HTTP POST. Request body
/// `{ "input": [str, ...], "model": str }`, response body
/// `{ "data": [ { "index": int, "embedding": [float, ...] } ] }`.
/// One retry on transient failures (connect errors, timeouts, 429/5xx).
pub struct RemoteHttpProvider {
    client: reqwest::blocking::Client,
    config: RemoteConfig,
    limiter: Semaphore,
    /// Dimension pinned by the first successful response of this session.
    session_dim: AtomicUsize,
}

#[derive(Deserialize)]
struct WireResponse {
    data: Vec<WireEmbedding>,
}

#[derive(Deserialize)]
struct WireEmbedding {
    index: usize,
    embedding: Vec<f64>,
}

impl RemoteHttpProvider {
    pub fn new(config: RemoteConfig) -> Result<Self, EmbedError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| EmbedError::Unavailable(e.to_string()))?;
        Ok(RemoteHttpProvider {
            client,
            limiter: Semaphore::new(config.max_in_flight.max(1)),
            config,
            session_dim: AtomicUsize::new(0),
        })
    }

    fn post_once(&self, body: &serde_json::Value) -> Result<reqwest::blocking::Response, Transient> {
        let mut request = self.client.post(&self.config.url).json(body);
        if let Some(key) = &self.config.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| Transient::Yes(e.to_string()))?;
        let status = response.status();
        if status.is_success() {
            Ok(response)
        } else if status.is_server_error() || status.as_u16() == 429 {
            Err(Transient::Yes(format!("status {status}")))
        } else {
            Err(Transient::No(format!("status {status}")))
        }
    }
}

enum Transient {
    Yes(String),
    No(String),
}

impl EmbeddingProvider for RemoteHttpProvider {
    fn name(&self) -> &str {
        "remote-http"
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let _permit = self.limiter.acquire();
        let body = serde_json::json!({ "input": texts, "model": self.config.model });

        let response = match self.post_once(&body) {
            Ok(r) => r,
            Err(Transient::Yes(_)) => self
                .post_once(&body)
                .map_err(|e| EmbedError::Unavailable(e.into_message()))?,
            Err(Transient::No(message)) => return Err(EmbedError::Unavailable(message)),
        };

        let wire: WireResponse = response
            .json()
            .map_err(|e| EmbedError::MalformedResponse(e.to_string()))?;
        if wire.data.len() != texts.len() {
            return Err(EmbedError::MalformedResponse(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                wire.data.len()
            )));
        }

        let mut ordered: Vec<Option<Vec<f64>>> = vec![None; texts.len()];
        for item in wire.data {
            let slot = ordered.get_mut(item.index).ok_or_else(|| {
                EmbedError::MalformedResponse(format!("index {} out of range", item.index))
            })?;
            if slot.replace(item.embedding).is_some() {
                return Err(EmbedError::MalformedResponse(format!(
                    "duplicate index {}",
                    item.index
                )));
            }
        }

        let vectors: Vec<Vec<f64>> = ordered
            .into_iter()
            .enumerate()
            .map(|(i, slot)| {
                slot.ok_or_else(|| EmbedError::MalformedResponse(format!("missing index {i}")))
            })
            .collect::<Result<_, _>>()?;

        // All vectors of this batch, and of the whole session, must agree on
        // the dimension.
        let dim = vectors[0].len();
        if let Some(bad) = vectors.iter().find(|v| v.len() != dim) {
            return Err(EmbedError::DimensionMismatch { expected: dim, got: bad.len() });
        }
        let pinned = self.session_dim.compare_exchange(0, dim, Ordering::SeqCst, Ordering::SeqCst);
        if let Err(previous) = pinned {
            if previous != dim {
                return Err(EmbedError::DimensionMismatch { expected: previous, got: dim });
            }
        }

        vectors.into_iter().map(EmbeddingVector::new).collect()
    }
}

impl Transient {
    fn into_message(self) -> String {
        match self {
            Transient::Yes(m) | Transient::No(m) => m,
        }
    }
}

/// Minimal counting semaphore bounding in-flight remote requests.
struct Semaphore {
    permits: Mutex<usize>,
    available: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(count: usize) -> Self {
        Semaphore { permits: Mutex::new(count), available: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.available.wait(permits).unwrap();
        }
        *permits -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut permits = self.0.permits.lock().unwrap();
        *permits += 1;
        self.0.available.notify_one();
    }
}
