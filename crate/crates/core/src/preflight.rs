//! Ranking-consistency check that predicts whether key evidence is likely
//! buried mid-context.
//!
//! Two rankers that agree on their top results suggest the dense ranker
//! put the key document near the top. Low top-`n` overlap predicts the
//! issue and routes the query to the map-reduce path.

use alloc::collections::BTreeSet;
use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::ranking::{Ranking, RankingError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreflightConfig {
    pub n: usize,
    pub iou_threshold: f64,
}

impl Default for PreflightConfig {
    fn default() -> Self {
        Self { n: 3, iou_threshold: 0.2 }
    }
}

impl PreflightConfig {
    pub fn is_valid(&self) -> bool {
        self.n >= 1 && (0.0..=1.0).contains(&self.iou_threshold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreflightVerdict {
    pub iou: f64,
    pub predicts_issue: bool,
}

/// Intersection over union of the top-`n` id sets. Rankings shorter than
/// `n` contribute all of their entries.
pub fn iou_at_n(r1: &Ranking, r2: &Ranking, n: usize) -> Result<f64, RankingError> {
    if r1.is_empty() || r2.is_empty() {
        return Err(RankingError::EmptyRanking);
    }
    if n == 0 {
        return Err(RankingError::ZeroK);
    }
    let a: BTreeSet<&str> = r1.top(n).iter().map(|e| e.id.as_str()).collect();
    let b: BTreeSet<&str> = r2.top(n).iter().map(|e| e.id.as_str()).collect();
    let inter = a.intersection(&b).count();
    let union = a.union(&b).count();
    Ok(inter as f64 / union as f64)
}

/// Predicts the issue when `iou <= threshold`; the boundary counts as an
/// issue so that recall is favoured.
pub fn preflight_check(r_dense: &Ranking, r_bm25: &Ranking, config: PreflightConfig) -> Result<PreflightVerdict, RankingError> {
    let iou = iou_at_n(r_dense, r_bm25, config.n)?;
    Ok(PreflightVerdict { iou, predicts_issue: iou <= config.iou_threshold })
}

/// Ground truth for the preflight evaluation: true when none of `key_ids`
/// is among the first `n` entries of `ranking`.
pub fn label_issue_occurrence(ranking: &Ranking, key_ids: &[String], n: usize) -> bool {
    !ranking.top(n).iter().any(|e| key_ids.contains(&e.id))
}
