use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{RankerSource, Ranking, RankingError};
use crate::document::Corpus;
use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn is_valid(&self) -> bool {
        self.k1 > 0.0 && (0.0..=1.0).contains(&self.b)
    }
}

#[derive(Debug, Clone)]
struct DocStats {
    id: String,
    len: u32,
    tf: BTreeMap<String, u32>,
}

/// Term statistics over a whole corpus. Candidate subsets are always scored
/// against these global statistics.
#[derive(Debug, Clone)]
pub struct Bm25Index {
    docs: Vec<DocStats>,
    position: BTreeMap<String, usize>,
    df: BTreeMap<String, u32>,
    avgdl: f64,
}

impl Bm25Index {
    pub fn build(corpus: &Corpus) -> Self {
        let mut docs = Vec::with_capacity(corpus.len());
        let mut df: BTreeMap<String, u32> = BTreeMap::new();
        let mut position = BTreeMap::new();
        let mut total_len = 0u64;
        for (i, doc) in corpus.iter().enumerate() {
            let tokens = tokenize(&doc.full_text());
            total_len += tokens.len() as u64;
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokens.iter() {
                *tf.entry(t.clone()).or_default() += 1;
            }
            for t in tf.keys() {
                *df.entry(t.clone()).or_default() += 1;
            }
            position.insert(doc.id.clone(), i);
            docs.push(DocStats { id: doc.id.clone(), len: tokens.len() as u32, tf });
        }
        let avgdl = if docs.is_empty() { 0.0 } else { total_len as f64 / docs.len() as f64 };
        Self { docs, position, df, avgdl }
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// `ln(1 + (N - df + 0.5) / (df + 0.5))`
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.docs.len() as f64;
        let df = self.df.get(term).copied().unwrap_or(0) as f64;
        libm::log(1.0 + (n - df + 0.5) / (df + 0.5))
    }

    fn score_doc(&self, doc: &DocStats, query_terms: &[(String, f64)], params: Bm25Params) -> f64 {
        let norm = if self.avgdl > 0.0 { doc.len as f64 / self.avgdl } else { 0.0 };
        let mut score = 0.0;
        for (term, idf) in query_terms {
            let tf = match doc.tf.get(term) {
                Some(&tf) => tf as f64,
                None => continue,
            };
            score += idf * tf * (params.k1 + 1.0) / (tf + params.k1 * (1.0 - params.b + params.b * norm));
        }
        score
    }

    /// Scores every document, or only `candidates` when given (rerank mode).
    /// Each query token occurrence contributes one term.
    pub fn rank(
        &self,
        query: &str,
        params: Bm25Params,
        candidates: Option<&[String]>,
        k: usize,
    ) -> Result<Ranking, RankingError> {
        if k == 0 {
            return Err(RankingError::ZeroK);
        }
        let query_terms: Vec<(String, f64)> = tokenize(query)
            .into_iter()
            .map(|t| {
                let idf = self.idf(&t);
                (t, idf)
            })
            .collect();
        let selected: Vec<&DocStats> = match candidates {
            None => self.docs.iter().collect(),
            Some(ids) => ids
                .iter()
                .map(|id| {
                    self.position
                        .get(id)
                        .map(|&i| &self.docs[i])
                        .ok_or_else(|| RankingError::UnknownCandidate(id.clone()))
                })
                .collect::<Result<_, _>>()?,
        };
        let scored = selected.into_iter().map(|d| (d.id.clone(), self.score_doc(d, &query_terms, params)));
        Ranking::from_scores(RankerSource::Bm25, scored, k)
    }
}

/// One-shot BM25 ranking; builds the term statistics from `corpus` first.
pub fn bm25_rank(
    corpus: &Corpus,
    query: &str,
    params: Bm25Params,
    candidates: Option<&[String]>,
    k: usize,
) -> Result<Ranking, RankingError> {
    Bm25Index::build(corpus).rank(query, params, candidates, k)
}
