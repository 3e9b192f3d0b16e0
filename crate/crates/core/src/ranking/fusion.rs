use alloc::collections::BTreeMap;
use alloc::string::String;

use super::{RankerSource, Ranking, RankingError};

/// Conventional smoothing constant for reciprocal rank fusion.
pub const DEFAULT_RRF_K: f64 = 60.0;

/// Reciprocal rank fusion: each document scores the sum over rankings of
/// `1 / (k_rrf + rank)` with 1-based ranks; absent documents add nothing.
pub fn rrf_fuse(rankings: &[Ranking], k_rrf: f64) -> Result<Ranking, RankingError> {
    if rankings.is_empty() {
        return Err(RankingError::EmptyRanking);
    }
    let mut scores: BTreeMap<&str, f64> = BTreeMap::new();
    for ranking in rankings {
        for (pos, entry) in ranking.entries.iter().enumerate() {
            *scores.entry(entry.id.as_str()).or_default() += 1.0 / (k_rrf + (pos + 1) as f64);
        }
    }
    let n = scores.len();
    Ranking::from_scores(RankerSource::Rrf, scores.into_iter().map(|(id, s)| (String::from(id), s)), n)
}
