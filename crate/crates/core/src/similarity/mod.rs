//! Document similarity linking.
//!
//! Whole documents are embedded through an [`EmbeddingProvider`], every
//! unordered pair is scored with cosine similarity, and pairs scoring
//! strictly above the threshold get one symmetric `relevant` edge between
//! their DOC entities, carrying the similarity as confidence.

mod cache;
mod provider;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::corpus::{doc_entity, PolicyDocument};
use crate::store::{GraphStore, Provenance, Stage, StoreError, TripleId};

pub use cache::{text_digest, EmbeddingCache};
pub use provider::{
    hash_ngram_provider, EmbeddingProvider, HashNgramProvider, HttpEmbeddingProvider, ProviderError, MIN_NGRAM_DIM,
};

pub const DEFAULT_LAMBDA: f64 = 0.85;
pub const DEFAULT_MAX_CHARS: usize = 24_000;

#[derive(Debug, Error)]
pub enum SimilarityError {
    #[error("vector dimensions differ ({left} vs {right})")]
    DimMismatch { left: usize, right: usize },
    #[error("cosine of an all-zero vector")]
    ZeroVector,
    #[error("document `{doc_id}` embeds to an all-zero vector")]
    ZeroDocument { doc_id: String },
    #[error("embedding failed for `{doc_id}`: {source}")]
    Provider { doc_id: String, source: ProviderError },
    #[error("invalid similarity config: {0}")]
    InvalidConfig(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub doc_id: String,
    pub values: Vec<f64>,
    pub provider_id: String,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// `dot(u, v) / (|u| |v|)`, clamped to [-1, 1].
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, SimilarityError> {
    if u.len() != v.len() {
        return Err(SimilarityError::DimMismatch { left: u.len(), right: v.len() });
    }
    let mut dot = 0.0;
    let mut uu = 0.0;
    let mut vv = 0.0;
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return Err(SimilarityError::ZeroVector);
    }
    Ok((dot / (uu.sqrt() * vv.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityConfig {
    /// Link threshold; pairs need similarity strictly greater than this.
    pub lambda: f64,
    pub provider_id: String,
    /// Documents are truncated to this many characters before embedding.
    pub max_chars: usize,
    pub parallelism: usize,
}

impl SimilarityConfig {
    pub fn new(lambda: f64, provider_id: impl Into<String>) -> Self {
        SimilarityConfig { lambda, provider_id: provider_id.into(), max_chars: DEFAULT_MAX_CHARS, parallelism: 1 }
    }

    pub fn validate(&self) -> Result<(), SimilarityError> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(SimilarityError::InvalidConfig(format!("lambda {} outside (0, 1)", self.lambda)));
        }
        if self.max_chars == 0 {
            return Err(SimilarityError::InvalidConfig("max_chars must be positive".into()));
        }
        if self.parallelism == 0 {
            return Err(SimilarityError::InvalidConfig("parallelism must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPair {
    pub left: String,
    pub right: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RelevanceOutcome {
    pub triple_ids: Vec<TripleId>,
    /// Linked pairs, (left, right) in doc_id order.
    pub pairs: Vec<ScoredPair>,
    pub evaluations: usize,
    pub cache_hits: usize,
}

fn truncated(text: &str, max_chars: usize) -> &str {
    match text.char_indices().nth(max_chars) {
        Some((byte, _)) => &text[..byte],
        None => text,
    }
}

/// Embeds every document, sorted by doc_id. Cache hits skip the provider.
pub fn embed_corpus(
    documents: &[&PolicyDocument],
    provider: &dyn EmbeddingProvider,
    config: &SimilarityConfig,
    mut cache: Option<&mut EmbeddingCache>,
) -> Result<(Vec<EmbeddingVector>, usize), SimilarityError> {
    let inputs: Vec<(&str, &str, String)> = documents
        .iter()
        .map(|d| {
            let text = truncated(&d.body, config.max_chars);
            if text.len() < d.body.len() {
                log::info!("{}: truncated to {} characters before embedding", d.doc_id, config.max_chars);
            }
            (d.doc_id.as_str(), text, text_digest(text))
        })
        .collect();

    let mut vectors: Vec<Option<Vec<f64>>> = inputs
        .iter()
        .map(|(id, _, digest)| cache.as_deref().and_then(|c| c.get(id, digest)).map(<[f64]>::to_vec))
        .collect();
    let hits = vectors.iter().filter(|v| v.is_some()).count();
    let missing: Vec<usize> = (0..inputs.len()).filter(|i| vectors[*i].is_none()).collect();

    let chunk = missing.len().div_ceil(config.parallelism.max(1)).max(1);
    let computed: Vec<(usize, Result<Vec<f64>, ProviderError>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = missing
            .chunks(chunk)
            .map(|idxs| {
                let inputs = &inputs;
                scope.spawn(move || idxs.iter().map(|&i| (i, provider.embed(inputs[i].1))).collect::<Vec<_>>())
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("embedding worker panicked")).collect()
    });
    for (i, result) in computed {
        let values = result.map_err(|source| SimilarityError::Provider { doc_id: inputs[i].0.to_string(), source })?;
        if values.len() != provider.dim() {
            return Err(SimilarityError::Provider {
                doc_id: inputs[i].0.to_string(),
                source: ProviderError::WrongDim { expected: provider.dim(), got: values.len() },
            });
        }
        if let Some(c) = cache.as_deref_mut() {
            c.insert(inputs[i].0, inputs[i].2.clone(), values.clone());
        }
        vectors[i] = Some(values);
    }
    let vectors = inputs
        .iter()
        .zip(vectors)
        .map(|((id, _, _), v)| EmbeddingVector {
            doc_id: id.to_string(),
            values: v.expect("every vector resolved"),
            provider_id: provider.provider_id().to_string(),
        })
        .collect();
    Ok((vectors, hits))
}

/// Links every document pair scoring above `config.lambda`.
pub fn build_relevance_edges(
    documents: &[PolicyDocument],
    provider: &dyn EmbeddingProvider,
    config: &SimilarityConfig,
    store: &mut GraphStore,
    cache: Option<&mut EmbeddingCache>,
) -> Result<RelevanceOutcome, SimilarityError> {
    config.validate()?;
    if documents.is_empty() {
        return Err(SimilarityError::EmptyCorpus);
    }
    if !config.provider_id.is_empty() && config.provider_id != provider.provider_id() {
        return Err(SimilarityError::InvalidConfig(format!(
            "config names provider `{}` but `{}` was supplied",
            config.provider_id,
            provider.provider_id()
        )));
    }
    let mut sorted: Vec<&PolicyDocument> = documents.iter().collect();
    sorted.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));

    let (vectors, cache_hits) = embed_corpus(&sorted, provider, config, cache)?;
    for v in &vectors {
        if v.values.iter().all(|x| *x == 0.0) {
            return Err(SimilarityError::ZeroDocument { doc_id: v.doc_id.clone() });
        }
    }

    let mut outcome = RelevanceOutcome { cache_hits, ..Default::default() };
    for i in 0..vectors.len() {
        for j in (i + 1)..vectors.len() {
            let similarity = cosine(&vectors[i].values, &vectors[j].values)?;
            outcome.evaluations += 1;
            if similarity > config.lambda {
                outcome.pairs.push(ScoredPair {
                    left: vectors[i].doc_id.clone(),
                    right: vectors[j].doc_id.clone(),
                    similarity,
                });
            }
        }
    }

    let by_id: BTreeMap<&str, &PolicyDocument> = sorted.iter().map(|d| (d.doc_id.as_str(), *d)).collect();
    for pair in &outcome.pairs {
        let left = doc_entity(store, by_id[pair.left.as_str()])?;
        let right = doc_entity(store, by_id[pair.right.as_str()])?;
        if left == right {
            continue;
        }
        let prov = Provenance::new(&pair.left, Stage::Similarity, pair.similarity.min(1.0));
        let inserted = store.insert_triple(&left, "relevant", &right, prov)?;
        if !outcome.triple_ids.contains(&inserted.triple_id) {
            outcome.triple_ids.push(inserted.triple_id);
        }
    }
    Ok(outcome)
}
