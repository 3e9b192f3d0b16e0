//! Experiment protocols and the report fold.
//!
//! Runners produce answer traces and preflight records; every number in a
//! report is folded from those records alone (see [`fold_report`]).

mod report;

pub use report::{
    fold_report, run_conflict_analysis, write_outputs, AccuracyCell, ConflictCell, CostCell, ExperimentReport,
    read_run, OutputPaths, PreflightSection, ReportMetadata, RunRecord, PREFLIGHT_JSONL, REPORT_CSV, REPORT_JSON, RUN_JSON,
    TRACES_JSONL,
};

use std::fmt;

use ctxmap_core::document::QaItem;
use ctxmap_core::metrics::percentile_to_index;
use ctxmap_core::preflight::{label_issue_occurrence, preflight_check};
use ctxmap_core::ranking::{make_synthetic_ranking, RankingError};
use ctxmap_core::text::fnv1a;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::backend::Backend;
use crate::exec::parallel_map;
use crate::pipeline::{
    answer_briefcontext_on_ranking, answer_closed_book, answer_oracle, answer_rag, AnswerTrace, Condition, Mode,
    PipelineConfig, PipelineError, Retriever,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Key document placed at fixed percentiles of a synthetic ranking.
    PositionSweep,
    /// Every mode over real dense retrieval.
    Integration,
    /// Map-reduce and single-prompt answers over the same retrieval, for
    /// the conflict breakdown.
    Conflict,
    /// Preflight predictions against ground-truth issue labels.
    PreflightEval,
    /// Key document mid-context among dense neighbours or random documents.
    AttentionBias,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentKind::PositionSweep => "position_sweep",
            ExperimentKind::Integration => "integration",
            ExperimentKind::Conflict => "conflict",
            ExperimentKind::PreflightEval => "preflight_eval",
            ExperimentKind::AttentionBias => "attention_bias",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Key-document percentiles for the position sweep.
    pub positions: Vec<f64>,
    pub top_k_values: Vec<usize>,
    /// Modes run by the integration protocol.
    pub modes: Vec<Mode>,
    /// `n` of the ground-truth issue label.
    pub issue_top_n: usize,
    /// Evaluate a seeded uniform sample of this fraction of the items.
    pub sample_fraction: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::PositionSweep,
            positions: vec![0.0, 25.0, 50.0, 75.0, 100.0],
            top_k_values: vec![16],
            modes: vec![Mode::Briefcontext, Mode::Rag, Mode::Cot, Mode::ClosedBook, Mode::Oracle],
            issue_top_n: 3,
            sample_fraction: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |field: &str, why: &str| Err(EvalError::Config(format!("experiment.{field}: {why}")));
        if let Some(p) = self.positions.iter().find(|p| !(0.0..=100.0).contains(*p)) {
            return bad("positions", &format!("percentile {p} outside [0, 100]"));
        }
        if self.kind == ExperimentKind::PositionSweep && self.positions.is_empty() {
            return bad("positions", "at least one percentile is required");
        }
        if self.top_k_values.is_empty() || self.top_k_values.contains(&0) {
            return bad("top_k_values", "need at least one value and every value must be positive");
        }
        if self.issue_top_n == 0 {
            return bad("issue_top_n", "must be at least 1");
        }
        if self.modes.is_empty() {
            return bad("modes", "at least one mode is required");
        }
        if let Some(f) = self.sample_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return bad("sample_fraction", "must lie in (0, 1]");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Pipeline(#[from] PipelineError),
    #[error("retrieval failed for question {question_id}: {source}")]
    Retrieval { question_id: String, source: RankingError },
    #[error("corpus holds {corpus} documents but k = {k}")]
    CorpusTooSmall { corpus: usize, k: usize },
    #[error("question {0}: briefcontext trace has no rag partner under the same condition")]
    Unpaired(String),
}

/// Per-item preflight outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreflightRecord {
    pub question_id: String,
    pub top_k: usize,
    pub iou: f64,
    pub predicted_issue: bool,
    pub issue_occurred: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skip {
    pub question_id: String,
    pub reason: String,
}

/// A question that could not be run at all under some condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub question_id: String,
    pub mode: Mode,
    pub condition: Condition,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub traces: Vec<AnswerTrace>,
    pub preflight: Vec<PreflightRecord>,
    pub skipped: Vec<Skip>,
    pub failures: Vec<Failure>,
}

impl RunOutput {
    fn absorb(&mut self, mode: Mode, condition: &Condition, question_id: &str, result: Result<AnswerTrace, PipelineError>) {
        match result {
            Ok(mut t) => {
                t.condition = condition.clone();
                self.traces.push(t);
            }
            Err(e) => {
                let error = e.to_string();
                warn!(question = question_id, %mode, %error, "question failed");
                match e.into_trace() {
                    Some(mut t) => {
                        t.condition = condition.clone();
                        self.traces.push(t);
                    }
                    None => self.failures.push(Failure {
                        question_id: question_id.to_string(),
                        mode,
                        condition: condition.clone(),
                        error,
                    }),
                }
            }
        }
    }
}

/// Everything a protocol needs besides its own parameters.
pub struct ExperimentContext<'a> {
    pub items: &'a [QaItem],
    pub retriever: Retriever<'a>,
    pub backend: &'a dyn Backend,
    pub pipeline: &'a PipelineConfig,
    pub seed: u64,
}

impl ExperimentContext<'_> {
    fn config_for(&self, top_k: usize) -> PipelineConfig {
        PipelineConfig { top_k, batch_size: self.pipeline.batch_size.min(top_k), ..self.pipeline.clone() }
    }

    /// Items whose key documents are all in the corpus; the rest are
    /// reported as skipped.
    fn usable(&self, items: &[QaItem], out: &mut RunOutput) -> Vec<QaItem> {
        let mut keep = Vec::new();
        for item in items {
            let missing: Vec<&str> =
                item.key_doc_ids.iter().filter(|id| !self.retriever.corpus.contains(id)).map(String::as_str).collect();
            if item.key_doc_ids.is_empty() {
                warn!(question = %item.id, "no key documents; skipped");
                out.skipped.push(Skip { question_id: item.id.clone(), reason: "no key documents".into() });
            } else if !missing.is_empty() {
                warn!(question = %item.id, ?missing, "key documents missing from corpus; skipped");
                out.skipped.push(Skip {
                    question_id: item.id.clone(),
                    reason: format!("key documents not in corpus: {}", missing.join(", ")),
                });
            } else {
                keep.push(item.clone());
            }
        }
        keep
    }

    fn dense(&self, item: &QaItem, k: usize) -> Result<ctxmap_core::ranking::Ranking, EvalError> {
        self.retriever
            .dense(&item.question, k)
            .map_err(|source| EvalError::Retrieval { question_id: item.id.clone(), source })
    }

    /// Non-key documents in dense order, at least `k` of them when the
    /// corpus allows.
    fn dense_fillers(&self, item: &QaItem) -> Result<Vec<String>, EvalError> {
        let all = self.dense(item, self.retriever.corpus.len().max(1))?;
        Ok(all.ids().filter(|id| !item.key_doc_ids.iter().any(|k| k == id)).map(str::to_string).collect())
    }
}

fn run_items<F>(items: &[QaItem], bound: usize, f: F) -> Vec<Vec<Job>>
where
    F: Fn(&QaItem) -> Vec<Job> + Sync,
{
    parallel_map(items, bound, |_, item| f(item))
}

/// Runs the configured protocol. Items are evaluated concurrently; results
/// are folded in item order.
pub fn run_experiment(config: &ExperimentConfig, ctx: &ExperimentContext<'_>) -> Result<RunOutput, EvalError> {
    config.validate()?;
    ctx.pipeline.validate()?;
    let mut out = RunOutput::default();
    let items = match config.sample_fraction {
        Some(f) => crate::dataprep::sample_fraction(ctx.items, f, ctx.seed),
        None => ctx.items.to_vec(),
    };
    match config.kind {
        ExperimentKind::PositionSweep => run_position_sweep(config, ctx, &items, &mut out)?,
        ExperimentKind::Integration => run_integration(config, ctx, &items, &mut out)?,
        ExperimentKind::Conflict => run_conflict(config, ctx, &items, &mut out)?,
        ExperimentKind::PreflightEval => run_preflight_eval(config, ctx, &items, &mut out)?,
        ExperimentKind::AttentionBias => run_attention_bias(config, ctx, &items, &mut out)?,
    }
    Ok(out)
}

type Job = (Mode, Condition, String, Result<AnswerTrace, PipelineError>);

fn collect(out: &mut RunOutput, per_item: Vec<Vec<Job>>) {
    for jobs in per_item {
        for (mode, condition, qid, result) in jobs {
            out.absorb(mode, &condition, &qid, result);
        }
    }
}

/// Synthetic rankings with the key documents at each configured
/// percentile, fillers taken from the dense ranking; answered by both the
/// single-prompt and the map-reduce path.
pub fn run_position_sweep(
    config: &ExperimentConfig,
    ctx: &ExperimentContext<'_>,
    items: &[QaItem],
    out: &mut RunOutput,
) -> Result<(), EvalError> {
    let items = ctx.usable(items, out);
    let fillers: Vec<Vec<String>> = items.iter().map(|i| ctx.dense_fillers(i)).collect::<Result<_, _>>()?;
    let indexed: Vec<(QaItem, Vec<String>)> = items.into_iter().zip(fillers).collect();
    for &k in &config.top_k_values {
        let pcfg = ctx.config_for(k);
        for &p in &config.positions {
            let condition = Condition { top_k: k, percentile: Some(p), group: None };
            let per_item = parallel_map(&indexed, ctx.pipeline.parallelism, |_, (item, fill)| -> Vec<Job> {
                let key_position = percentile_to_index(p, k).min(k.saturating_sub(item.key_doc_ids.len()));
                let ranking = match make_synthetic_ranking(&item.key_doc_ids, fill, k, key_position) {
                    Ok(r) => r,
                    Err(source) => {
                        let err = PipelineError::Retrieval { question_id: item.id.clone(), source };
                        return vec![(Mode::Rag, condition.clone(), item.id.clone(), Err(err))];
                    }
                };
                vec![
                    (
                        Mode::Rag,
                        condition.clone(),
                        item.id.clone(),
                        answer_rag(item, &ranking, ctx.retriever.corpus, ctx.backend, &pcfg),
                    ),
                    (
                        Mode::Briefcontext,
                        condition.clone(),
                        item.id.clone(),
                        answer_briefcontext_on_ranking(item, &ranking, &ctx.retriever, ctx.backend, &pcfg),
                    ),
                ]
            });
            collect(out, per_item);
        }
    }
    Ok(())
}

fn run_integration(
    config: &ExperimentConfig,
    ctx: &ExperimentContext<'_>,
    items: &[QaItem],
    out: &mut RunOutput,
) -> Result<(), EvalError> {
    let retrieval_modes: Vec<Mode> =
        config.modes.iter().copied().filter(|m| matches!(m, Mode::Briefcontext | Mode::Rag)).collect();
    for &k in &config.top_k_values {
        if retrieval_modes.is_empty() {
            break;
        }
        let pcfg = ctx.config_for(k);
        let condition = Condition { top_k: k, ..Condition::default() };
        let per_item = run_items(items, ctx.pipeline.parallelism, |item| {
            let ranking = match ctx.retriever.dense(&item.question, k) {
                Ok(r) => r,
                Err(source) => {
                    let err = PipelineError::Retrieval { question_id: item.id.clone(), source };
                    return vec![(retrieval_modes[0], condition.clone(), item.id.clone(), Err(err))];
                }
            };
            retrieval_modes
                .iter()
                .map(|&m| {
                    let r = match m {
                        Mode::Rag => answer_rag(item, &ranking, ctx.retriever.corpus, ctx.backend, &pcfg),
                        _ => answer_briefcontext_on_ranking(item, &ranking, &ctx.retriever, ctx.backend, &pcfg),
                    };
                    (m, condition.clone(), item.id.clone(), r)
                })
                .collect()
        });
        collect(out, per_item);
    }
    let context_free: Vec<Mode> =
        config.modes.iter().copied().filter(|m| !matches!(m, Mode::Briefcontext | Mode::Rag)).collect();
    if context_free.is_empty() {
        return Ok(());
    }
    let condition = Condition::default();
    let per_item = run_items(items, ctx.pipeline.parallelism, |item| {
        context_free
            .iter()
            .map(|&m| {
                let r = match m {
                    Mode::Oracle => answer_oracle(item, ctx.retriever.corpus, ctx.backend, ctx.pipeline),
                    Mode::Cot => answer_closed_book(item, ctx.backend, ctx.pipeline, true),
                    _ => answer_closed_book(item, ctx.backend, ctx.pipeline, false),
                };
                (m, condition.clone(), item.id.clone(), r)
            })
            .collect()
    });
    collect(out, per_item);
    Ok(())
}

fn run_conflict(
    config: &ExperimentConfig,
    ctx: &ExperimentContext<'_>,
    items: &[QaItem],
    out: &mut RunOutput,
) -> Result<(), EvalError> {
    let cfg = ExperimentConfig { modes: vec![Mode::Briefcontext, Mode::Rag], ..config.clone() };
    run_integration(&cfg, ctx, items, out)
}

/// Dense top-k against its BM25 rerank for every item, labelled with the
/// ground-truth issue occurrence on the dense ranking. No backend calls.
pub fn run_preflight_eval(
    config: &ExperimentConfig,
    ctx: &ExperimentContext<'_>,
    items: &[QaItem],
    out: &mut RunOutput,
) -> Result<(), EvalError> {
    let items = ctx.usable(items, out);
    for &k in &config.top_k_values {
        for item in &items {
            let dense = ctx.dense(item, k)?;
            let reranked = ctx
                .retriever
                .rerank(&item.question, &dense, ctx.pipeline.bm25)
                .map_err(|source| EvalError::Retrieval { question_id: item.id.clone(), source })?;
            let verdict = preflight_check(&dense, &reranked, ctx.pipeline.preflight)
                .map_err(|source| EvalError::Retrieval { question_id: item.id.clone(), source })?;
            out.preflight.push(PreflightRecord {
                question_id: item.id.clone(),
                top_k: k,
                iou: verdict.iou,
                predicted_issue: verdict.predicts_issue,
                issue_occurred: label_issue_occurrence(&dense, &item.key_doc_ids, config.issue_top_n),
            });
        }
    }
    Ok(())
}

/// Control: the dense neighbours with the key moved to `floor(k / 2)`.
/// Random: the key at the same slot among `k - 1` uniformly sampled non-key
/// documents, seeded per question.
pub fn run_attention_bias(
    config: &ExperimentConfig,
    ctx: &ExperimentContext<'_>,
    items: &[QaItem],
    out: &mut RunOutput,
) -> Result<(), EvalError> {
    let corpus = ctx.retriever.corpus;
    if let Some(&k) = config.top_k_values.iter().find(|&&k| k > corpus.len()) {
        return Err(EvalError::CorpusTooSmall { corpus: corpus.len(), k });
    }
    let items = ctx.usable(items, out);
    let fillers: Vec<Vec<String>> = items.iter().map(|i| ctx.dense_fillers(i)).collect::<Result<_, _>>()?;
    let indexed: Vec<(QaItem, Vec<String>)> = items.into_iter().zip(fillers).collect();
    for &k in &config.top_k_values {
        let pcfg = ctx.config_for(k);
        let per_item = parallel_map(&indexed, ctx.pipeline.parallelism, |_, (item, dense_fill)| -> Vec<Job> {
            let slot = (k / 2).min(k.saturating_sub(item.key_doc_ids.len()));
            let pool: Vec<String> =
                corpus.iter().map(|d| d.id.clone()).filter(|id| !item.key_doc_ids.contains(id)).collect();
            let random_fill = random_fillers(&pool, k.saturating_sub(item.key_doc_ids.len()), ctx.seed, &item.id);
            let mut jobs = Vec::new();
            for (group, fill) in [("control", dense_fill), ("random", &random_fill)] {
                let condition = Condition { top_k: k, percentile: None, group: Some(group.to_string()) };
                let result = make_synthetic_ranking(&item.key_doc_ids, fill, k, slot)
                    .map_err(|source| PipelineError::Retrieval { question_id: item.id.clone(), source })
                    .and_then(|r| answer_rag(item, &r, corpus, ctx.backend, &pcfg));
                jobs.push((Mode::Rag, condition, item.id.clone(), result));
            }
            jobs
        });
        collect(out, per_item);
    }
    Ok(())
}

/// `n` ids drawn uniformly without replacement, reproducible from
/// `(seed, question id)` alone.
pub fn random_fillers(pool: &[String], n: usize, seed: u64, question_id: &str) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(question_id.as_bytes()));
    let n = n.min(pool.len());
    sample(&mut rng, pool.len(), n).into_iter().map(|i| pool[i].clone()).collect()
}
