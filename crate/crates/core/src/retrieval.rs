//! Two-stage retrieval: exact metadata filter, then cosine re-ranking of the
//! surviving candidates against the embedded query.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::key::UnitKey;
use crate::providers::EmbeddingProvider;
use crate::store::MemoryStore;

pub const DEFAULT_TOP_K: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryKey {
    /// `None` matches every object type.
    pub object_type: Option<String>,
    /// `None` matches every aspect.
    pub aspect: Option<String>,
    pub query_text: String,
}

impl QueryKey {
    pub fn new(object_type: Option<&str>, aspect: Option<&str>, query_text: &str) -> Result<QueryKey> {
        if query_text.trim().is_empty() {
            return Err(Error::InvalidQuery("query text is empty".into()));
        }
        Ok(QueryKey {
            object_type: object_type.map(str::to_string),
            aspect: aspect.map(str::to_string),
            query_text: query_text.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hit {
    pub key: UnitKey,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct RetrievalResult {
    pub hits: Vec<Hit>,
    /// Units that passed the metadata filter.
    pub candidate_count: usize,
}

impl RetrievalResult {
    pub fn keys(&self) -> impl Iterator<Item = &UnitKey> {
        self.hits.iter().map(|h| &h.key)
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 || !na.is_finite() || !nb.is_finite() {
        return Err(Error::ZeroVector);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Ranking order: score descending, then most recently updated, then key.
pub fn rank_order(store: &MemoryStore, a: &Hit, b: &Hit) -> Ordering {
    let updated = |k: &UnitKey| store.get(k).map_or(0, |u| u.updated_at);
    b.score.total_cmp(&a.score).then_with(|| updated(&b.key).cmp(&updated(&a.key))).then_with(|| a.key.cmp(&b.key))
}

pub fn retrieve(
    store: &MemoryStore,
    embedder: &dyn EmbeddingProvider,
    key: &QueryKey,
    k: usize,
) -> Result<RetrievalResult> {
    let candidates = store.filter_by_metadata(key.object_type.as_deref(), key.aspect.as_deref());
    if candidates.is_empty() || k == 0 {
        return Ok(RetrievalResult { hits: Vec::new(), candidate_count: candidates.len() });
    }
    let query = embedder.embed(&key.query_text)?;
    retrieve_among(store, candidates.into_iter(), &query, k)
}

/// Stage 2 only, with a precomputed query vector.
pub fn retrieve_with_vector(store: &MemoryStore, key: &QueryKey, query: &[f64], k: usize) -> Result<RetrievalResult> {
    let candidates = store.filter_by_metadata(key.object_type.as_deref(), key.aspect.as_deref());
    retrieve_among(store, candidates.into_iter(), query, k)
}

fn retrieve_among(
    store: &MemoryStore,
    candidates: impl ExactSizeIterator<Item = UnitKey>,
    query: &[f64],
    k: usize,
) -> Result<RetrievalResult> {
    if query.len() != store.dim() {
        return Err(Error::DimensionMismatch { expected: store.dim(), got: query.len() });
    }
    let candidate_count = candidates.len();
    let mut hits = candidates
        .map(|key| {
            let emb = store.embedding(&key).expect("indexed key has an embedding");
            Ok(Hit { score: cosine(query, emb)?, key })
        })
        .collect::<Result<Vec<_>>>()?;
    hits.sort_by(|a, b| rank_order(store, a, b));
    hits.truncate(k);
    Ok(RetrievalResult { hits, candidate_count })
}
