//! On-disk embedding cache keyed by doc_id, versioned by provider.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CachedVector {
    digest: String,
    values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingCache {
    provider_id: String,
    dim: usize,
    entries: BTreeMap<String, CachedVector>,
}

pub fn text_digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl EmbeddingCache {
    pub fn new(provider_id: impl Into<String>, dim: usize) -> Self {
        EmbeddingCache { provider_id: provider_id.into(), dim, entries: BTreeMap::new() }
    }

    /// Reads a cache file. A missing file, or one written by another
    /// provider or dimension, yields an empty cache.
    pub fn load(path: &Path, provider_id: &str, dim: usize) -> std::io::Result<Self> {
        if !path.exists() {
            return Ok(EmbeddingCache::new(provider_id, dim));
        }
        let text = std::fs::read_to_string(path)?;
        match serde_json::from_str::<EmbeddingCache>(&text) {
            Ok(cache) if cache.provider_id == provider_id && cache.dim == dim => Ok(cache),
            Ok(cache) => {
                log::info!(
                    "embedding cache {} belongs to {} (dim {}); starting fresh",
                    path.display(),
                    cache.provider_id,
                    cache.dim
                );
                Ok(EmbeddingCache::new(provider_id, dim))
            }
            Err(e) => {
                log::warn!("ignoring unreadable embedding cache {}: {e}", path.display());
                Ok(EmbeddingCache::new(provider_id, dim))
            }
        }
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string(self).map_err(std::io::Error::other)?;
        std::fs::write(path, text)
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Cached vector for `doc_id`, only if it was computed from identical text.
    pub fn get(&self, doc_id: &str, digest: &str) -> Option<&[f64]> {
        self.entries
            .get(doc_id)
            .filter(|c| c.digest == digest && c.values.len() == self.dim)
            .map(|c| c.values.as_slice())
    }

    pub fn insert(&mut self, doc_id: &str, digest: String, values: Vec<f64>) {
        self.entries.insert(doc_id.to_string(), CachedVector { digest, values });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_provider_versioning() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.json");
        let mut cache = EmbeddingCache::new("p1", 2);
        let d = text_digest("abc");
        cache.insert("doc", d.clone(), vec![0.1, 0.2]);
        cache.save(&path).unwrap();

        let back = EmbeddingCache::load(&path, "p1", 2).unwrap();
        assert_eq!(back.get("doc", &d), Some(&[0.1, 0.2][..]));
        assert_eq!(back.get("doc", &text_digest("changed")), None);
        assert!(EmbeddingCache::load(&path, "p2", 2).unwrap().is_empty());
        assert!(EmbeddingCache::load(&path, "p1", 3).unwrap().is_empty());
    }
}
