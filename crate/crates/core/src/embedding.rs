//! Embedding providers for the semantic similarity signal.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("embedding request failed: {0}")]
    Transport(String),
    #[error("embedding response malformed: {0}")]
    Malformed(String),
    #[error("embedding dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
}

/// Maps strings to fixed-dimension real vectors. Implementations must be
/// order-preserving and safe to call from several threads.
pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError>;
}

pub const HASHING_DIM: usize = 256;

/// Offline embedder: character trigrams of the normalized text, feature
/// hashed into 256 buckets and L2-normalized.
#[derive(Debug, Clone, Copy, Default)]
pub struct HashingEmbedder;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl HashingEmbedder {
    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let norm: String = text.nfc().collect::<String>().to_lowercase();
        let chars: Vec<char> = std::iter::once('^')
            .chain(norm.chars())
            .chain(std::iter::once('$'))
            .collect();
        let mut v = vec![0.0; HASHING_DIM];
        let mut buf = [0u8; 12];
        for w in chars.windows(3) {
            let mut len = 0;
            for c in w {
                len += c.encode_utf8(&mut buf[len..]).len();
            }
            v[(fnv1a(&buf[..len]) % HASHING_DIM as u64) as usize] += 1.0;
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            v.iter_mut().for_each(|x| *x /= n);
        }
        v
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    input: &'a [String],
    model: &'a str,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

/// Remote embedder speaking `POST {"input": [...], "model": ...}` and
/// reading `{"data": [{"embedding": [...]}, ...]}`.
pub struct HttpEmbedder {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    api_key: Option<String>,
}

impl HttpEmbedder {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        Ok(HttpEmbedder {
            client,
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
        })
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let mut req = self.client.post(&self.endpoint).json(&EmbeddingRequest {
            input: texts,
            model: &self.model,
        });
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        tracing::debug!(endpoint = %self.endpoint, n = texts.len(), "embedding request");
        let resp = req
            .send()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(ProviderError::Transport(format!("http status {status}")));
        }
        let body: EmbeddingResponse = resp
            .json()
            .map_err(|e| ProviderError::Malformed(e.to_string()))?;
        if body.data.len() != texts.len() {
            return Err(ProviderError::Malformed(format!(
                "{} embeddings for {} inputs",
                body.data.len(),
                texts.len()
            )));
        }
        let vectors: Vec<Vec<f64>> = body.data.into_iter().map(|d| d.embedding).collect();
        let dim = vectors[0].len();
        if let Some(bad) = vectors.iter().find(|v| v.len() != dim) {
            return Err(ProviderError::Dimension(dim, bad.len()));
        }
        Ok(vectors)
    }
}
