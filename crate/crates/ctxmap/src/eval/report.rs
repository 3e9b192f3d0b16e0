use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ctxmap_core::cost::CostTally;
use ctxmap_core::metrics::{accuracy, conflict_stats, evaluate_preflight, ConflictStats, PreflightMetrics};
use serde::{Deserialize, Serialize};

use super::{EvalError, Failure, PreflightRecord, RunOutput, Skip};
use crate::io::{write_jsonl, IoError};
use crate::pipeline::{AnswerTrace, Condition, Mode};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const TRACES_JSONL: &str = "traces.jsonl";
pub const PREFLIGHT_JSONL: &str = "preflight.jsonl";
pub const RUN_JSON: &str = "run.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub experiment: String,
    pub seed: u64,
    pub backend: String,
    pub items: usize,
    pub traces_file: String,
    pub preflight_file: String,
    /// Effective configuration of the run.
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCell {
    pub mode: Mode,
    pub top_k: usize,
    pub percentile: Option<f64>,
    pub group: Option<String>,
    pub n: u64,
    pub correct: u64,
    pub accuracy: f64,
    /// Traces in this cell that ended in a backend error.
    pub errors: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictCell {
    pub top_k: usize,
    pub percentile: Option<f64>,
    pub group: Option<String>,
    #[serde(flatten)]
    pub stats: ConflictStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreflightSection {
    pub n: usize,
    #[serde(flatten)]
    pub metrics: PreflightMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostCell {
    pub mode: Mode,
    #[serde(flatten)]
    pub tally: CostTally,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub metadata: ReportMetadata,
    pub accuracy: Vec<AccuracyCell>,
    pub conflict: Vec<ConflictCell>,
    pub preflight: Option<PreflightSection>,
    pub cost: Vec<CostCell>,
    pub skipped: Vec<Skip>,
    pub failures: Vec<Failure>,
}

/// Orderable form of a [`Condition`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct CellKey {
    top_k: usize,
    percentile_bits: Option<(bool, u64)>,
    group: Option<String>,
}

impl CellKey {
    fn of(c: &Condition) -> Self {
        // total order on finite non-negative percentiles
        let percentile_bits = c.percentile.map(|p| (p.is_sign_negative(), p.to_bits()));
        Self { top_k: c.top_k, percentile_bits, group: c.group.clone() }
    }
}

/// Each map-reduce trace with the single-prompt trace of the same question
/// and condition, if there is one.
fn pairs(traces: &[AnswerTrace]) -> Vec<(&AnswerTrace, Option<&AnswerTrace>)> {
    let mut rag: BTreeMap<(String, CellKey), &AnswerTrace> = BTreeMap::new();
    for t in traces.iter().filter(|t| t.mode == Mode::Rag) {
        rag.entry((t.question_id.clone(), CellKey::of(&t.condition))).or_insert(t);
    }
    traces
        .iter()
        .filter(|t| t.mode == Mode::Briefcontext)
        .map(|t| (t, rag.get(&(t.question_id.clone(), CellKey::of(&t.condition))).copied()))
        .collect()
}

/// `(conflict_flag, map_reduce_correct, baseline_correct)`
type ConflictCase = (bool, bool, bool);

fn conflict_cells<'a>(paired: impl Iterator<Item = (&'a AnswerTrace, &'a AnswerTrace)>) -> Vec<ConflictCell> {
    let mut groups: BTreeMap<CellKey, (Condition, Vec<ConflictCase>)> = BTreeMap::new();
    for (bc, rag) in paired {
        groups
            .entry(CellKey::of(&bc.condition))
            .or_insert_with(|| (bc.condition.clone(), Vec::new()))
            .1
            .push((bc.conflict_flag, bc.is_correct(), rag.is_correct()));
    }
    groups
        .into_values()
        .map(|(c, cases)| ConflictCell {
            top_k: c.top_k,
            percentile: c.percentile,
            group: c.group,
            stats: conflict_stats(cases),
        })
        .collect()
}

/// Conflict breakdown over map-reduce traces paired with single-prompt
/// traces of the same question and condition. Every map-reduce trace must
/// have a partner.
pub fn run_conflict_analysis(traces: &[AnswerTrace]) -> Result<Vec<ConflictCell>, EvalError> {
    let paired = pairs(traces);
    let mut full = Vec::with_capacity(paired.len());
    for (bc, rag) in paired {
        match rag {
            Some(r) => full.push((bc, r)),
            None => return Err(EvalError::Unpaired(bc.question_id.clone())),
        }
    }
    Ok(conflict_cells(full.into_iter()))
}

/// Pure fold of a run into its report. Cells are ordered by mode, then
/// top-k, percentile and group.
pub fn fold_report(metadata: ReportMetadata, run: &RunOutput) -> ExperimentReport {
    let mut cells: BTreeMap<(Mode, CellKey), (Condition, Vec<bool>, u64)> = BTreeMap::new();
    let mut costs: BTreeMap<Mode, CostTally> = BTreeMap::new();
    for t in &run.traces {
        let cell = cells
            .entry((t.mode, CellKey::of(&t.condition)))
            .or_insert_with(|| (t.condition.clone(), Vec::new(), 0));
        cell.1.push(t.is_correct());
        cell.2 += u64::from(t.error.is_some());
        costs.entry(t.mode).or_insert_with(|| CostTally::new(t.cost.pricing)).merge(&t.cost);
    }
    let accuracy_cells = cells
        .into_iter()
        .map(|((mode, _), (c, oks, errors))| {
            let a = accuracy(oks);
            AccuracyCell {
                mode,
                top_k: c.top_k,
                percentile: c.percentile,
                group: c.group,
                n: a.total,
                correct: a.correct,
                accuracy: a.accuracy,
                errors,
            }
        })
        .collect();

    let paired = pairs(&run.traces);
    let conflict = conflict_cells(paired.into_iter().filter_map(|(bc, rag)| rag.map(|r| (bc, r))));

    let preflight = (!run.preflight.is_empty()).then(|| PreflightSection {
        n: run.preflight.len(),
        metrics: evaluate_preflight(run.preflight.iter().map(|r| (r.predicted_issue, r.issue_occurred))),
    });

    ExperimentReport {
        metadata,
        accuracy: accuracy_cells,
        conflict,
        preflight,
        cost: costs.into_iter().map(|(mode, tally)| CostCell { mode, tally }).collect(),
        skipped: run.skipped.clone(),
        failures: run.failures.clone(),
    }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    section: &'a str,
    mode: &'a str,
    top_k: usize,
    percentile: Option<f64>,
    group: Option<&'a str>,
    n: u64,
    correct: u64,
    accuracy: f64,
    win_pct: Option<f64>,
    tie_pct: Option<f64>,
    lose_pct: Option<f64>,
}

impl ExperimentReport {
    /// One row per accuracy cell and per conflict cell. For conflict rows
    /// `n` counts conflicts and `correct` counts resolved ones.
    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for c in &self.accuracy {
            w.serialize(CsvRow {
                section: "accuracy",
                mode: c.mode.as_str(),
                top_k: c.top_k,
                percentile: c.percentile,
                group: c.group.as_deref(),
                n: c.n,
                correct: c.correct,
                accuracy: c.accuracy,
                win_pct: None,
                tie_pct: None,
                lose_pct: None,
            })?;
        }
        for c in &self.conflict {
            w.serialize(CsvRow {
                section: "conflict",
                mode: "briefcontext",
                top_k: c.top_k,
                percentile: c.percentile,
                group: c.group.as_deref(),
                n: c.stats.conflicts,
                correct: c.stats.resolved,
                accuracy: c.stats.resolved_pct / 100.0,
                win_pct: Some(c.stats.win_pct),
                tie_pct: Some(c.stats.tie_pct),
                lose_pct: Some(c.stats.lose_pct),
            })?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Plain-text summary for the terminal.
    pub fn headline(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "experiment {} (seed {}, {} items)", self.metadata.experiment, self.metadata.seed, self.metadata.items);
        if !self.accuracy.is_empty() {
            let _ = writeln!(s, "{:<13} {:>5} {:>10} {:>8} {:>5} {:>8}", "mode", "top_k", "percentile", "group", "n", "accuracy");
            for c in &self.accuracy {
                let p = c.percentile.map(|p| p.to_string()).unwrap_or_else(|| "-".into());
                let g = c.group.as_deref().unwrap_or("-");
                let _ = writeln!(s, "{:<13} {:>5} {:>10} {:>8} {:>5} {:>7.2}%", c.mode, c.top_k, p, g, c.n, 100.0 * c.accuracy);
            }
        }
        for c in &self.conflict {
            let st = &c.stats;
            let mut cell = format!("top_k {}", c.top_k);
            if let Some(p) = c.percentile {
                let _ = write!(cell, ", percentile {p}");
            }
            if let Some(g) = &c.group {
                let _ = write!(cell, ", group {g}");
            }
            let _ = writeln!(
                s,
                "conflicts ({cell}): {} of {} cases, resolved {} ({:.2}%), win/tie/lose {:.2}/{:.2}/{:.2}%",
                st.conflicts, st.cases, st.resolved, st.resolved_pct, st.win_pct, st.tie_pct, st.lose_pct
            );
        }
        if let Some(p) = &self.preflight {
            let m = &p.metrics;
            let c = m.confusion;
            let _ = writeln!(s, "preflight over {} items", p.n);
            let _ = writeln!(s, "                 issue  no issue");
            let _ = writeln!(s, "predicted issue  {:>5}  {:>8}", c.tp, c.fp);
            let _ = writeln!(s, "predicted clean  {:>5}  {:>8}", c.fn_, c.tn);
            let _ = writeln!(
                s,
                "precision {:.2}%  recall {:.2}%  f1 {:.2}%  negatives filtered {:.2}%",
                100.0 * m.precision.value,
                100.0 * m.recall.value,
                100.0 * m.f1.value,
                100.0 * m.negatives_filtered.value
            );
        }
        for c in &self.cost {
            let _ = writeln!(s, "cost {:<13} {} requests, {} in / {} out tokens, {}", c.mode, c.tally.requests, c.tally.input_tokens.0, c.tally.output_tokens.0, c.tally.cost);
        }
        if !self.skipped.is_empty() || !self.failures.is_empty() {
            let _ = writeln!(s, "skipped {}, failed {}", self.skipped.len(), self.failures.len());
        }
        s
    }
}

/// Files written for one run, all directly under the output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputPaths {
    pub report_json: PathBuf,
    pub report_csv: PathBuf,
    pub traces: PathBuf,
    pub preflight: PathBuf,
    pub run: PathBuf,
}

impl OutputPaths {
    pub fn under(dir: &Path) -> Self {
        Self {
            report_json: dir.join(REPORT_JSON),
            report_csv: dir.join(REPORT_CSV),
            traces: dir.join(TRACES_JSONL),
            preflight: dir.join(PREFLIGHT_JSONL),
            run: dir.join(RUN_JSON),
        }
    }
}

/// Everything besides traces and preflight records needed to re-fold a
/// report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub metadata: ReportMetadata,
    pub skipped: Vec<Skip>,
    pub failures: Vec<Failure>,
}

fn write_file(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|source| IoError::Io { path: path.to_path_buf(), source })
}

pub fn write_outputs(dir: &Path, report: &ExperimentReport, run: &RunOutput) -> Result<OutputPaths, IoError> {
    fs::create_dir_all(dir).map_err(|source| IoError::Io { path: dir.to_path_buf(), source })?;
    let paths = OutputPaths::under(dir);
    write_jsonl(&paths.traces, &run.traces)?;
    write_jsonl(&paths.preflight, &run.preflight)?;
    let record = RunRecord { metadata: report.metadata.clone(), skipped: run.skipped.clone(), failures: run.failures.clone() };
    write_file(&paths.run, &(serde_json::to_string_pretty(&record).expect("run record serializes") + "\n"))?;
    write_file(&paths.report_json, &(serde_json::to_string_pretty(report).expect("report serializes") + "\n"))?;
    let csv = report.to_csv().map_err(|e| IoError::Invalid { path: paths.report_csv.clone(), line: 0, detail: e.to_string() })?;
    write_file(&paths.report_csv, &csv)?;
    Ok(paths)
}

/// Reads back what [`write_outputs`] wrote, minus the report itself.
pub fn read_run(dir: &Path) -> Result<(RunRecord, RunOutput), IoError> {
    let paths = OutputPaths::under(dir);
    let text = fs::read_to_string(&paths.run).map_err(|source| IoError::Io { path: paths.run.clone(), source })?;
    let record: RunRecord = serde_json::from_str(&text)
        .map_err(|e| IoError::Malformed { path: paths.run.clone(), line: e.line(), detail: e.to_string() })?;
    let traces = crate::io::read_jsonl(&paths.traces)?;
    let preflight: Vec<PreflightRecord> = crate::io::read_jsonl(&paths.preflight)?;
    let run = RunOutput { traces, preflight, skipped: record.skipped.clone(), failures: record.failures.clone() };
    Ok((record, run))
}
