//! Embedding providers.

use std::time::Duration;

use serde_json::json;
use thiserror::Error;

use crate::remote::{JsonEndpoint, RemoteError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("remote embedding failed: {0}")]
    Remote(#[from] RemoteError),
    #[error("provider returned {got} values, expected {expected}")]
    WrongDim { expected: usize, got: usize },
    #[error("provider returned a non-finite value")]
    NonFinite,
}

/// Maps a text to a fixed-length vector. Implementations must be
/// deterministic for a fixed configuration and keep `dim` constant.
pub trait EmbeddingProvider: Send + Sync {
    fn provider_id(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError>;
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET ^ seed.wrapping_mul(FNV_PRIME);
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Character n-gram counts hashed into `dim` buckets. A deterministic,
/// offline stand-in for a neural document encoder.
#[derive(Debug, Clone)]
pub struct HashNgramProvider {
    dim: usize,
    n: usize,
    seed: u64,
    id: String,
}

pub const MIN_NGRAM_DIM: usize = 16;
const DEFAULT_SEED: u64 = 0x5eed_f0e5_7a11_c0de;

impl HashNgramProvider {
    /// `dim` must be at least 16 and `n` at least 1.
    pub fn new(dim: usize, n: usize) -> Self {
        assert!(dim >= MIN_NGRAM_DIM, "hash n-gram provider needs dim >= {MIN_NGRAM_DIM}");
        assert!(n >= 1, "n-gram length must be positive");
        HashNgramProvider { dim, n, seed: DEFAULT_SEED, id: format!("hash-ngram-d{dim}-n{n}") }
    }
}

impl Default for HashNgramProvider {
    fn default() -> Self {
        HashNgramProvider::new(1024, 2)
    }
}

pub fn hash_ngram_provider(dim: usize, n: usize) -> HashNgramProvider {
    HashNgramProvider::new(dim, n)
}

impl EmbeddingProvider for HashNgramProvider {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        let mut values = vec![0.0; self.dim];
        let chars: Vec<char> = text.chars().collect();
        if chars.is_empty() {
            return Ok(values);
        }
        let mut buf = String::new();
        let mut bump = |gram: &[char]| {
            buf.clear();
            buf.extend(gram);
            let bucket = (fnv1a(self.seed, buf.as_bytes()) % self.dim as u64) as usize;
            values[bucket] += 1.0;
        };
        if chars.len() < self.n {
            bump(&chars);
        } else {
            chars.windows(self.n).for_each(&mut bump);
        }
        Ok(values)
    }
}

/// Remote encoder speaking `POST {"text": ...}` -> `{"vector": [...]}`.
#[derive(Debug, Clone)]
pub struct HttpEmbeddingProvider {
    endpoint: JsonEndpoint,
    dim: usize,
    id: String,
}

impl HttpEmbeddingProvider {
    pub fn new(url: &str, dim: usize, provider_id: impl Into<String>) -> Self {
        HttpEmbeddingProvider {
            endpoint: JsonEndpoint::new(url, Duration::from_secs(120)),
            dim,
            id: provider_id.into(),
        }
    }

    pub fn with_endpoint(endpoint: JsonEndpoint, dim: usize, provider_id: impl Into<String>) -> Self {
        HttpEmbeddingProvider { endpoint, dim, id: provider_id.into() }
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        let response = self.endpoint.post(&json!({ "text": text }))?;
        let values = response
            .get("vector")
            .or_else(|| response.get("embedding"))
            .and_then(|v| v.as_array())
            .ok_or_else(|| RemoteError::Malformed("missing `vector` array".into()))?
            .iter()
            .map(|v| v.as_f64().ok_or(ProviderError::NonFinite))
            .collect::<Result<Vec<f64>, _>>()?;
        if values.len() != self.dim {
            return Err(ProviderError::WrongDim { expected: self.dim, got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ProviderError::NonFinite);
        }
        Ok(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_embeds_to_zero() {
        let p = hash_ngram_provider(16, 2);
        let v = p.embed("").unwrap();
        assert_eq!(v.len(), 16);
        assert!(v.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn deterministic_and_counts_grams() {
        let p = hash_ngram_provider(64, 2);
        let a = p.embed("森林资源保护").unwrap();
        assert_eq!(a, p.embed("森林资源保护").unwrap());
        // 6 chars -> 5 bigrams
        assert_eq!(a.iter().sum::<f64>(), 5.0);
        // shorter than n: one gram
        assert_eq!(p.embed("林").unwrap().iter().sum::<f64>(), 1.0);
    }

    #[test]
    #[should_panic]
    fn rejects_tiny_dim() {
        hash_ngram_provider(8, 2);
    }
}
