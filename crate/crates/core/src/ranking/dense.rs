use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use super::{RankerSource, Ranking, RankingError};
use crate::document::Corpus;
use crate::text::{fnv1a, tokenize};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbedError(pub String);

impl fmt::Display for EmbedError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Maps text to a fixed-dimension vector. Implementations used in tests
/// must return identical vectors for identical text.
pub trait EmbeddingProvider {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError>;
}

/// Bag-of-words feature hashing with L2 normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    dimension: usize,
}

impl HashingEmbedder {
    pub const DEFAULT_DIMENSION: usize = 256;

    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension }
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIMENSION)
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let mut v = vec![0.0; self.dimension];
        for token in tokenize(text) {
            let bucket = (fnv1a(token.as_bytes()) % self.dimension as u64) as usize;
            v[bucket] += 1.0;
        }
        let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseEntry {
    pub id: String,
    pub vector: Vec<f64>,
}

/// Exhaustively scanned vector index, one entry per document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseIndex {
    dimension: usize,
    entries: Vec<DenseEntry>,
}

impl DenseIndex {
    pub fn new(dimension: usize) -> Result<Self, RankingError> {
        if dimension == 0 {
            return Err(RankingError::ZeroDimension);
        }
        Ok(Self { dimension, entries: Vec::new() })
    }

    pub fn push(&mut self, id: String, vector: Vec<f64>) -> Result<(), RankingError> {
        if vector.len() != self.dimension {
            return Err(RankingError::DimensionMismatch { expected: self.dimension, got: vector.len() });
        }
        if self.entries.iter().any(|e| e.id == id) {
            return Err(RankingError::DuplicateId(id));
        }
        self.entries.push(DenseEntry { id, vector });
        Ok(())
    }

    /// Rebuilds from persisted parts, re-checking every invariant.
    pub fn from_entries(dimension: usize, entries: Vec<DenseEntry>) -> Result<Self, RankingError> {
        let mut index = Self::new(dimension)?;
        let mut seen = alloc::collections::BTreeSet::new();
        for e in &entries {
            if e.vector.len() != dimension {
                return Err(RankingError::DimensionMismatch { expected: dimension, got: e.vector.len() });
            }
            if !seen.insert(e.id.as_str()) {
                return Err(RankingError::DuplicateId(e.id.clone()));
            }
        }
        index.entries = entries;
        Ok(index)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn entries(&self) -> &[DenseEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn build_dense_index(corpus: &Corpus, provider: &dyn EmbeddingProvider) -> Result<DenseIndex, RankingError> {
    let mut index = DenseIndex::new(provider.dimension())?;
    for doc in corpus {
        let vector = provider
            .embed(&doc.full_text())
            .map_err(|e| RankingError::Provider { doc_id: doc.id.clone(), reason: e.0 })?;
        if vector.len() != index.dimension {
            return Err(RankingError::Provider {
                doc_id: doc.id.clone(),
                reason: RankingError::DimensionMismatch { expected: index.dimension, got: vector.len() }.to_string(),
            });
        }
        index.entries.push(DenseEntry { id: doc.id.clone(), vector });
    }
    Ok(index)
}

fn inner_product(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Top-`k` documents by inner product with the query embedding.
pub fn dense_retrieve(
    index: &DenseIndex,
    query: &str,
    provider: &dyn EmbeddingProvider,
    k: usize,
) -> Result<Ranking, RankingError> {
    if k == 0 {
        return Err(RankingError::ZeroK);
    }
    let q = provider
        .embed(query)
        .map_err(|e| RankingError::Provider { doc_id: String::from("<query>"), reason: e.0 })?;
    if q.len() != index.dimension {
        return Err(RankingError::DimensionMismatch { expected: index.dimension, got: q.len() });
    }
    let scored = index.entries.iter().map(|e| (e.id.clone(), inner_product(&e.vector, &q)));
    Ranking::from_scores(RankerSource::Dense, scored, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::document::Document;

    /// Looks vectors up by exact text.
    struct TableProvider(Vec<(&'static str, Vec<f64>)>, usize);

    impl EmbeddingProvider for TableProvider {
        fn dimension(&self) -> usize {
            self.1
        }
        fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
            self.0
                .iter()
                .find(|(t, _)| *t == text)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| EmbedError("unknown text".into()))
        }
    }

    fn two_dim() -> (Corpus, TableProvider) {
        let corpus = Corpus::from_documents([
            Document::new("a", "", "alpha"),
            Document::new("b", "", "beta"),
            Document::new("c", "", "gamma"),
        ])
        .unwrap();
        let provider = TableProvider(
            vec![
                ("alpha", vec![2.0, 0.0]),
                ("beta", vec![0.0, 3.0]),
                ("gamma", vec![1.0, 1.0]),
                ("q", vec![1.0, 0.0]),
                ("zero", vec![0.0, 0.0]),
                ("bad", vec![1.0]),
            ],
            2,
        );
        (corpus, provider)
    }

    #[test]
    fn inner_product_ranking() {
        let (corpus, p) = two_dim();
        let index = build_dense_index(&corpus, &p).unwrap();
        let r = dense_retrieve(&index, "q", &p, 2).unwrap();
        assert_eq!(r.id_vec(), ["a", "c"]);
        assert_eq!(r.entries[0].score, 2.0);
        assert_eq!(r.entries[1].score, 1.0);
        assert_eq!(r.source, RankerSource::Dense);
    }

    #[test]
    fn k_larger_than_index_returns_everything() {
        let (corpus, p) = two_dim();
        let index = build_dense_index(&corpus, &p).unwrap();
        assert_eq!(dense_retrieve(&index, "q", &p, 99).unwrap().len(), 3);
    }

    #[test]
    fn zero_query_ties_break_by_id() {
        let (corpus, p) = two_dim();
        let index = build_dense_index(&corpus, &p).unwrap();
        let r = dense_retrieve(&index, "zero", &p, 3).unwrap();
        assert_eq!(r.id_vec(), ["a", "b", "c"]);
        assert!(r.entries.iter().all(|e| e.score == 0.0));
    }

    #[test]
    fn query_dimension_mismatch() {
        let (corpus, p) = two_dim();
        let index = build_dense_index(&corpus, &p).unwrap();
        assert_eq!(
            dense_retrieve(&index, "bad", &p, 1),
            Err(RankingError::DimensionMismatch { expected: 2, got: 1 })
        );
    }

    #[test]
    fn provider_mismatch_names_document() {
        let corpus = Corpus::from_documents([Document::new("x", "", "bad")]).unwrap();
        let (_, p) = two_dim();
        match build_dense_index(&corpus, &p) {
            Err(RankingError::Provider { doc_id, .. }) => assert_eq!(doc_id, "x"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_corpus_gives_empty_index() {
        let index = build_dense_index(&Corpus::new(), &HashingEmbedder::new(4)).unwrap();
        assert!(index.is_empty());
        assert_eq!(index.dimension(), 4);
    }

    #[test]
    fn hashing_embedder_is_normalized_and_deterministic() {
        let e = HashingEmbedder::new(16);
        let a = e.embed("aspirin reduces stroke risk").unwrap();
        assert_eq!(a, e.embed("aspirin reduces stroke risk").unwrap());
        assert_eq!(a.len(), 16);
        let norm: f64 = a.iter().map(|x| x * x).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!(e.embed("").unwrap().iter().all(|&x| x == 0.0));
    }
}
