//! Relevance rankings and the rankers that produce them.

mod bm25;
mod dense;
mod fusion;
mod synthetic;

pub use bm25::{bm25_rank, Bm25Index, Bm25Params};
pub use dense::{build_dense_index, dense_retrieve, DenseEntry, DenseIndex, EmbedError, EmbeddingProvider, HashingEmbedder};
pub use fusion::{rrf_fuse, DEFAULT_RRF_K};
pub use synthetic::make_synthetic_ranking;

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankerSource {
    Dense,
    Bm25,
    Rrf,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDoc {
    pub id: String,
    pub score: f64,
}

/// Ordered `(id, score)` list. Scores never increase along the list and ids
/// are distinct; equal scores are ordered by ascending id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub source: RankerSource,
    pub entries: Vec<RankedDoc>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RankingError {
    DimensionMismatch { expected: usize, got: usize },
    ZeroDimension,
    Provider { doc_id: String, reason: String },
    UnknownCandidate(String),
    DuplicateId(String),
    ZeroK,
    EmptyRanking,
    NoKeyIds,
    InsufficientFillers { needed: usize, available: usize },
    PositionOutOfRange { index: usize, max: usize },
}

impl fmt::Display for RankingError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RankingError::DimensionMismatch { expected, got } => {
                write!(f, "embedding dimension mismatch: expected {expected}, got {got}")
            }
            RankingError::ZeroDimension => write!(f, "embedding dimension must be positive"),
            RankingError::Provider { doc_id, reason } => {
                write!(f, "embedding provider failed on document {doc_id:?}: {reason}")
            }
            RankingError::UnknownCandidate(id) => write!(f, "unknown candidate document id {id:?}"),
            RankingError::DuplicateId(id) => write!(f, "document id {id:?} appears twice in a ranking"),
            RankingError::ZeroK => write!(f, "k must be at least 1"),
            RankingError::EmptyRanking => write!(f, "ranking is empty"),
            RankingError::NoKeyIds => write!(f, "at least one key document id is required"),
            RankingError::InsufficientFillers { needed, available } => {
                write!(f, "need {needed} filler documents but only {available} available")
            }
            RankingError::PositionOutOfRange { index, max } => {
                write!(f, "key position {index} out of range (max {max})")
            }
        }
    }
}

impl core::error::Error for RankingError {}

pub(crate) fn by_score_then_id(a: &RankedDoc, b: &RankedDoc) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id))
}

impl Ranking {
    /// Sorts scored ids into ranking order and truncates to `k`.
    pub fn from_scores(
        source: RankerSource,
        scored: impl IntoIterator<Item = (String, f64)>,
        k: usize,
    ) -> Result<Self, RankingError> {
        let mut entries: Vec<RankedDoc> = scored.into_iter().map(|(id, score)| RankedDoc { id, score }).collect();
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !seen.insert(e.id.as_str()) {
                return Err(RankingError::DuplicateId(e.id.clone()));
            }
        }
        entries.sort_by(by_score_then_id);
        entries.truncate(k);
        Ok(Self { source, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.entries.iter().map(|e| e.id.as_str())
    }

    pub fn id_vec(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.id.clone()).collect()
    }

    pub fn position_of(&self, id: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.id == id)
    }

    /// First `n` entries (or all, when shorter).
    pub fn top(&self, n: usize) -> &[RankedDoc] {
        &self.entries[..n.min(self.entries.len())]
    }

    pub fn truncated(&self, k: usize) -> Ranking {
        Ranking { source: self.source, entries: self.top(k).to_vec() }
    }

    /// True when scores are non-increasing, ties are id-ascending and ids
    /// are distinct.
    pub fn is_well_formed(&self) -> bool {
        let ordered = self.entries.windows(2).all(|w| by_score_then_id(&w[0], &w[1]) == Ordering::Less);
        let mut seen = BTreeSet::new();
        ordered && self.entries.iter().all(|e| seen.insert(e.id.as_str()))
    }
}
