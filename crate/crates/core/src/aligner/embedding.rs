use std::time::Duration;

use crate::sampler::tokenize;

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("embedding service error: {0}")]
    Service(String),
    #[error("embedding has dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("embedding contains a non-finite component")]
    NonFinite,
}

/// Text to fixed-length vector. Identical inputs must map to identical
/// vectors with finite components.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError>;

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let mut out = self.embed_batch(&[text.to_string()])?;
        Ok(out.pop().unwrap_or_else(|| vec![0.0; self.dim()]))
    }
}

pub const HASHING_DIM: usize = 512;

/// Offline fallback: term counts hashed into `dim` buckets with a
/// multiplicative (base-31) string hash.
#[derive(Debug, Clone, Copy)]
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0);
        HashingEmbedder { dim }
    }

    pub fn bucket(&self, token: &str) -> usize {
        let h = token
            .bytes()
            .fold(0u64, |h, b| h.wrapping_mul(31).wrapping_add(u64::from(b)));
        (h % self.dim as u64) as usize
    }

    fn vector(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for t in tokenize(text) {
            v[self.bucket(&t)] += 1.0;
        }
        v
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder::new(HASHING_DIM)
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}

/// Remote service: POST a JSON array of strings, receive a JSON array of
/// float arrays.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    url: String,
    dim: usize,
    client: reqwest::blocking::Client,
}

impl HttpEmbedder {
    pub fn new(url: impl Into<String>, dim: usize) -> Self {
        HttpEmbedder {
            url: url.into(),
            dim,
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .expect("http client"),
        }
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let resp = self
            .client
            .post(&self.url)
            .json(texts)
            .send()
            .map_err(|e| EmbedError::Service(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(EmbedError::Service(format!("HTTP {}", resp.status())));
        }
        let vectors: Vec<Vec<f64>> = resp.json().map_err(|e| EmbedError::Service(e.to_string()))?;
        if vectors.len() != texts.len() {
            return Err(EmbedError::Service(format!(
                "{} vectors for {} inputs",
                vectors.len(),
                texts.len()
            )));
        }
        for v in &vectors {
            if v.len() != self.dim {
                return Err(EmbedError::Dimension {
                    expected: self.dim,
                    got: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(EmbedError::NonFinite);
            }
        }
        Ok(vectors)
    }
}
