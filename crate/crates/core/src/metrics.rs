//! Evaluation metrics: preflight confusion counts, accuracy, conflict
//! win/tie/lose bookkeeping and key-position placement.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn record(&mut self, predicted_issue: bool, issue_occurred: bool) {
        match (predicted_issue, issue_occurred) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Ratio with a flag raised when the denominator is zero (value then 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub value: f64,
    pub undefined: bool,
}

impl Ratio {
    pub fn of(num: u64, den: u64) -> Ratio {
        if den == 0 {
            Ratio { value: 0.0, undefined: true }
        } else {
            Ratio { value: num as f64 / den as f64, undefined: false }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreflightMetrics {
    pub confusion: Confusion,
    pub precision: Ratio,
    pub recall: Ratio,
    pub f1: Ratio,
    /// Share of no-issue queries the check lets through to the single-call
    /// path: `tn / (tn + fp)`.
    pub negatives_filtered: Ratio,
}

pub fn metrics_from_confusion(c: Confusion) -> PreflightMetrics {
    PreflightMetrics {
        confusion: c,
        precision: Ratio::of(c.tp, c.tp + c.fp),
        recall: Ratio::of(c.tp, c.tp + c.fn_),
        // harmonic mean of precision and recall, in count form
        f1: Ratio::of(2 * c.tp, 2 * c.tp + c.fp + c.fn_),
        negatives_filtered: Ratio::of(c.tn, c.tn + c.fp),
    }
}

/// Folds `(predicted_issue, issue_occurred)` pairs into metrics.
pub fn evaluate_preflight(labels: impl IntoIterator<Item = (bool, bool)>) -> PreflightMetrics {
    let mut c = Confusion::default();
    for (predicted, actual) in labels {
        c.record(predicted, actual);
    }
    metrics_from_confusion(c)
}

/// `round(p / 100 * (k - 1))`, rounding halves up.
pub fn percentile_to_index(percentile: f64, k: usize) -> usize {
    assert!((0.0..=100.0).contains(&percentile), "percentile must lie in [0, 100]");
    assert!(k >= 1, "k must be at least 1");
    libm::floor(percentile * (k - 1) as f64 / 100.0 + 0.5) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub correct: u64,
    pub total: u64,
    pub accuracy: f64,
    pub empty: bool,
}

pub fn accuracy(correct: impl IntoIterator<Item = bool>) -> Accuracy {
    let (mut c, mut n) = (0u64, 0u64);
    for ok in correct {
        n += 1;
        c += u64::from(ok);
    }
    let r = Ratio::of(c, n);
    Accuracy { correct: c, total: n, accuracy: r.value, empty: r.undefined }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Win,
    Tie,
    Lose,
}

pub fn compare(map_reduce_correct: bool, baseline_correct: bool) -> Outcome {
    match (map_reduce_correct, baseline_correct) {
        (true, false) => Outcome::Win,
        (false, true) => Outcome::Lose,
        _ => Outcome::Tie,
    }
}

pub fn round2(x: f64) -> f64 {
    libm::round(x * 100.0) / 100.0
}

/// Conflict-case statistics; percentages are over conflict cases and
/// rounded to two decimals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ConflictStats {
    pub cases: u64,
    pub conflicts: u64,
    pub resolved: u64,
    pub wins: u64,
    pub ties: u64,
    pub losses: u64,
    pub resolved_pct: f64,
    pub win_pct: f64,
    pub tie_pct: f64,
    pub lose_pct: f64,
}

/// Folds `(conflict_flag, map_reduce_correct, baseline_correct)` triples.
pub fn conflict_stats(cases: impl IntoIterator<Item = (bool, bool, bool)>) -> ConflictStats {
    let mut s = ConflictStats::default();
    for (conflict, bc, rag) in cases {
        s.cases += 1;
        if !conflict {
            continue;
        }
        s.conflicts += 1;
        s.resolved += u64::from(bc);
        match compare(bc, rag) {
            Outcome::Win => s.wins += 1,
            Outcome::Tie => s.ties += 1,
            Outcome::Lose => s.losses += 1,
        }
    }
    let pct = |n: u64| round2(100.0 * Ratio::of(n, s.conflicts).value);
    s.resolved_pct = pct(s.resolved);
    s.win_pct = pct(s.wins);
    s.tie_pct = pct(s.ties);
    s.lose_pct = pct(s.losses);
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reported_confusion_reproduces_metrics() {
        let m = metrics_from_confusion(Confusion { tp: 426, fp: 423, fn_: 34, tn: 235 });
        assert!((m.precision.value - 0.5018).abs() < 1e-4);
        assert!((m.recall.value - 0.9261).abs() < 1e-4);
        assert!((m.f1.value - 0.6509).abs() < 1e-4);
        assert!((m.negatives_filtered.value - 0.3571).abs() < 1e-4);
    }

    #[test]
    fn perfect_and_degenerate_predictions() {
        let m = evaluate_preflight([(true, true), (false, false), (true, true)]);
        assert_eq!((m.precision.value, m.recall.value, m.f1.value), (1.0, 1.0, 1.0));
        let none = evaluate_preflight([(false, true), (false, false)]);
        assert_eq!(none.precision, Ratio { value: 0.0, undefined: true });
        assert_eq!(none.confusion.total(), 2);
    }

    #[test]
    fn percentile_positions() {
        assert_eq!(percentile_to_index(0.0, 16), 0);
        assert_eq!(percentile_to_index(100.0, 16), 15);
        assert_eq!(percentile_to_index(50.0, 16), 8);
        assert_eq!(percentile_to_index(25.0, 8), 2);
        assert_eq!(percentile_to_index(75.0, 16), 11);
        assert_eq!(percentile_to_index(25.0, 16), 4);
        for p in [0.0, 25.0, 50.0, 75.0, 100.0] {
            assert_eq!(percentile_to_index(p, 1), 0);
        }
    }

    #[test]
    fn accuracy_counts() {
        let a = accuracy([true, true, false, true]);
        assert_eq!(a.accuracy, 0.75);
        let e = accuracy([]);
        assert!(e.empty);
        assert_eq!(e.accuracy, 0.0);
        assert_eq!(accuracy([false, false]).accuracy, 0.0);
    }

    #[test]
    fn outcomes() {
        assert_eq!(compare(true, false), Outcome::Win);
        assert_eq!(compare(true, true), Outcome::Tie);
        assert_eq!(compare(false, false), Outcome::Tie);
        assert_eq!(compare(false, true), Outcome::Lose);
    }

    #[test]
    fn conflict_rates() {
        let mut cases = [(true, true, false); 10];
        for c in cases.iter_mut().skip(7) {
            c.1 = false;
        }
        let s = conflict_stats(cases.iter().copied().chain([(false, true, true)]));
        assert_eq!((s.cases, s.conflicts, s.resolved), (11, 10, 7));
        assert_eq!(s.resolved_pct, 70.0);
        assert_eq!(s.wins + s.ties + s.losses, s.conflicts);
    }
}
