//! Answering paths: map-reduce over partitions of the retrieved context,
//! plain single-prompt retrieval answering, the oracle setting and
//! closed-book prompting.

use std::collections::BTreeSet;
use std::fmt;

use ctxmap_core::chat::{ChatRequest, ChatResponse};
use ctxmap_core::cost::{CostTally, TokenCount};
use ctxmap_core::document::{Corpus, Document, QaItem};
use ctxmap_core::partition::{context_map, Partition};
use ctxmap_core::preflight::{preflight_check, PreflightConfig, PreflightVerdict};
use ctxmap_core::prompt::{
    build_answer_prompt, build_closed_book_prompt, build_extraction_prompt, build_summarization_prompt, is_sentinel,
    parse_final_answer, Answer, PromptTemplates,
};
use ctxmap_core::ranking::{
    build_dense_index, dense_retrieve, Bm25Index, Bm25Params, DenseIndex, EmbeddingProvider, RankerSource, Ranking,
    RankingError,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::debug;

use crate::backend::{Backend, LlmError};
use crate::exec::parallel_map;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub top_k: usize,
    pub batch_size: usize,
    pub preflight: PreflightConfig,
    pub preflight_enabled: bool,
    pub bm25: Bm25Params,
    pub templates: PromptTemplates,
    pub max_output_tokens: u32,
    pub temperature: f64,
    /// Upper bound on concurrent backend calls within one question.
    pub parallelism: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            top_k: 16,
            batch_size: 4,
            preflight: PreflightConfig::default(),
            preflight_enabled: true,
            bm25: Bm25Params::default(),
            templates: PromptTemplates::default(),
            max_output_tokens: 512,
            temperature: 0.0,
            parallelism: 4,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |field: &'static str, why: &str| Err(PipelineError::Config(format!("{field}: {why}")));
        if self.top_k == 0 {
            return bad("top_k", "must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1");
        }
        if self.batch_size > self.top_k {
            return bad("batch_size", "must not exceed top_k");
        }
        if !self.preflight.is_valid() {
            return bad("preflight", "n must be at least 1 and iou_threshold within [0, 1]");
        }
        if !self.bm25.is_valid() {
            return bad("bm25", "k1 must be non-negative and b within [0, 1]");
        }
        if self.max_output_tokens == 0 {
            return bad("max_output_tokens", "must be at least 1");
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return bad("temperature", "must be a non-negative number");
        }
        if self.parallelism == 0 {
            return bad("parallelism", "must be at least 1");
        }
        Ok(())
    }

    fn stamp(&self, mut req: ChatRequest) -> ChatRequest {
        req.temperature = self.temperature;
        req
    }
}

/// Dense and BM25 indices over one corpus.
#[derive(Debug, Clone)]
pub struct Indices {
    pub dense: DenseIndex,
    pub bm25: Bm25Index,
}

impl Indices {
    pub fn build(corpus: &Corpus, provider: &dyn EmbeddingProvider) -> Result<Self, RankingError> {
        Ok(Self { dense: build_dense_index(corpus, provider)?, bm25: Bm25Index::build(corpus) })
    }
}

#[derive(Clone, Copy)]
pub struct Retriever<'a> {
    pub corpus: &'a Corpus,
    pub indices: &'a Indices,
    pub provider: &'a (dyn EmbeddingProvider + Sync),
}

impl<'a> Retriever<'a> {
    pub fn new(corpus: &'a Corpus, indices: &'a Indices, provider: &'a (dyn EmbeddingProvider + Sync)) -> Self {
        Self { corpus, indices, provider }
    }

    pub fn dense(&self, query: &str, k: usize) -> Result<Ranking, RankingError> {
        dense_retrieve(&self.indices.dense, query, self.provider, k)
    }

    /// BM25 over the documents of `ranking` only, with corpus-wide term
    /// statistics.
    pub fn rerank(&self, query: &str, ranking: &Ranking, params: Bm25Params) -> Result<Ranking, RankingError> {
        self.indices.bm25.rank(query, params, Some(&ranking.id_vec()), ranking.len().max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Briefcontext,
    Rag,
    Cot,
    Oracle,
    ClosedBook,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::Briefcontext, Mode::Rag, Mode::Cot, Mode::Oracle, Mode::ClosedBook];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Briefcontext => "briefcontext",
            Mode::Rag => "rag",
            Mode::Cot => "cot",
            Mode::Oracle => "oracle",
            Mode::ClosedBook => "closed_book",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode {s:?} (expected briefcontext, rag, cot, oracle or closed_book)"))
    }
}

/// Experimental cell a trace belongs to.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Condition {
    pub top_k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub percentile: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Extract,
    Reduce,
    Answer,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Extract => "extract",
            Stage::Reduce => "reduce",
            Stage::Answer => "answer",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub stage: Stage,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub partition: Option<usize>,
    pub request: ChatRequest,
    pub response: Option<ChatResponse>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionResult {
    pub partition_index: usize,
    pub extracted_info: String,
    pub provisional_answer: Answer,
    pub input_tokens: TokenCount,
    pub output_tokens: TokenCount,
}

impl PartitionResult {
    pub fn from_response(partition_index: usize, response: &ChatResponse, item: &QaItem) -> Self {
        let provisional_answer = if is_sentinel(&response.text) {
            Answer::Abstain
        } else {
            parse_final_answer(&response.text, &item.options)
        };
        Self {
            partition_index,
            extracted_info: response.text.clone(),
            provisional_answer,
            input_tokens: response.input_tokens,
            output_tokens: response.output_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerTrace {
    pub question_id: String,
    /// Requested mode.
    pub mode: Mode,
    /// Path actually taken; `rag` when the preflight check delegated.
    pub executed: Mode,
    #[serde(default)]
    pub condition: Condition,
    pub gold_answer: String,
    pub rankings: Vec<Ranking>,
    pub preflight: Option<PreflightVerdict>,
    pub partitions: Vec<Partition>,
    pub partition_results: Vec<PartitionResult>,
    pub calls: Vec<CallRecord>,
    pub final_answer: Answer,
    pub conflict_flag: bool,
    pub cost: CostTally,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl AnswerTrace {
    fn start(item: &QaItem, mode: Mode, backend: &(impl Backend + ?Sized)) -> Self {
        Self {
            question_id: item.id.clone(),
            mode,
            executed: mode,
            condition: Condition::default(),
            gold_answer: item.gold_answer.clone(),
            rankings: Vec::new(),
            preflight: None,
            partitions: Vec::new(),
            partition_results: Vec::new(),
            calls: Vec::new(),
            final_answer: Answer::Abstain,
            conflict_flag: false,
            cost: CostTally::new(backend.pricing()),
            error: None,
        }
    }

    pub fn is_correct(&self) -> bool {
        self.error.is_none() && self.final_answer.is_correct(&self.gold_answer)
    }

    /// Number of backend requests, failed ones included.
    pub fn backend_calls(&self) -> usize {
        self.calls.len()
    }

    /// Input and output tokens summed over the recorded responses.
    pub fn call_token_sums(&self) -> (TokenCount, TokenCount) {
        self.calls
            .iter()
            .filter_map(|c| c.response.as_ref())
            .fold((TokenCount(0), TokenCount(0)), |(i, o), r| (i + r.input_tokens, o + r.output_tokens))
    }

    fn push_call(&mut self, stage: Stage, partition: Option<usize>, request: ChatRequest, outcome: &Result<ChatResponse, LlmError>) {
        let (response, error) = match outcome {
            Ok(r) => {
                self.cost.record(r.input_tokens, r.output_tokens);
                (Some(r.clone()), None)
            }
            Err(e) => (None, Some(e.to_string())),
        };
        self.calls.push(CallRecord { stage, partition, request, response, error });
    }
}

/// True when at least two distinct non-abstain provisional answers exist.
pub fn has_conflict(results: &[PartitionResult]) -> bool {
    let distinct: BTreeSet<&Answer> =
        results.iter().map(|r| &r.provisional_answer).filter(|a| !a.is_abstain()).collect();
    distinct.len() >= 2
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline configuration: {0}")]
    Config(String),
    #[error("question {question_id}: retrieval failed: {source}")]
    Retrieval { question_id: String, source: RankingError },
    #[error("question {question_id}: document {doc_id:?} is not in the corpus")]
    UnknownDocument { question_id: String, doc_id: String },
    #[error("question {question_id}: no key documents to build an oracle context from")]
    NoKeyDocuments { question_id: String },
    #[error("question {}: {stage} call{} failed: {source}", trace.question_id, partition.map(|p| format!(" for partition {p}")).unwrap_or_default())]
    Backend { stage: Stage, partition: Option<usize>, source: LlmError, trace: Box<AnswerTrace> },
}

impl PipelineError {
    /// Partial trace of a run that failed at the backend.
    pub fn trace(&self) -> Option<&AnswerTrace> {
        match self {
            PipelineError::Backend { trace, .. } => Some(trace),
            _ => None,
        }
    }

    pub fn into_trace(self) -> Option<AnswerTrace> {
        match self {
            PipelineError::Backend { trace, .. } => Some(*trace),
            _ => None,
        }
    }
}

fn retrieval(item: &QaItem) -> impl Fn(RankingError) -> PipelineError + '_ {
    move |source| PipelineError::Retrieval { question_id: item.id.clone(), source }
}

fn fail(mut trace: AnswerTrace, stage: Stage, partition: Option<usize>, source: LlmError) -> PipelineError {
    trace.error = Some(source.to_string());
    PipelineError::Backend { stage, partition, source, trace: Box::new(trace) }
}

fn lookup<'c>(corpus: &'c Corpus, item: &QaItem, ids: &[String]) -> Result<Vec<&'c Document>, PipelineError> {
    ids.iter()
        .map(|id| {
            corpus
                .get(id)
                .ok_or_else(|| PipelineError::UnknownDocument { question_id: item.id.clone(), doc_id: id.clone() })
        })
        .collect()
}

/// Dense top-k, then the preflight gate, then map-reduce or delegation.
pub fn answer_briefcontext<B: Backend + ?Sized>(
    item: &QaItem,
    retriever: &Retriever<'_>,
    backend: &B,
    config: &PipelineConfig,
) -> Result<AnswerTrace, PipelineError> {
    config.validate()?;
    let ranking = retriever.dense(&item.question, config.top_k).map_err(retrieval(item))?;
    answer_briefcontext_on_ranking(item, &ranking, retriever, backend, config)
}

/// Map-reduce answering over a given ranking (such as a synthetic one).
/// With the preflight gate enabled the ranking is checked against its BM25
/// rerank first and handed to [`answer_rag`] when no issue is predicted.
pub fn answer_briefcontext_on_ranking<B: Backend + ?Sized>(
    item: &QaItem,
    ranking: &Ranking,
    retriever: &Retriever<'_>,
    backend: &B,
    config: &PipelineConfig,
) -> Result<AnswerTrace, PipelineError> {
    config.validate()?;
    if ranking.is_empty() {
        return Err(retrieval(item)(RankingError::EmptyRanking));
    }
    let mut trace = AnswerTrace::start(item, Mode::Briefcontext, backend);
    trace.rankings.push(ranking.clone());
    if config.preflight_enabled {
        let reranked = retriever.rerank(&item.question, ranking, config.bm25).map_err(retrieval(item))?;
        let verdict = preflight_check(ranking, &reranked, config.preflight).map_err(retrieval(item))?;
        trace.rankings.push(reranked);
        trace.preflight = Some(verdict);
        debug!(question = %item.id, iou = verdict.iou, issue = verdict.predicts_issue, "preflight");
        if !verdict.predicts_issue {
            trace.executed = Mode::Rag;
            return single_prompt(trace, item, ranking, retriever.corpus, backend, config);
        }
    }

    let partitions = context_map(&ranking.truncated(config.top_k), config.batch_size);
    let mut requests = Vec::with_capacity(partitions.len());
    for p in &partitions {
        let docs = lookup(retriever.corpus, item, &p.doc_ids)?;
        requests.push(config.stamp(build_extraction_prompt(item, &docs, &config.templates, config.max_output_tokens)));
    }
    trace.partitions = partitions;

    let outcomes = parallel_map(&requests, config.parallelism, |_, req| backend.complete(req));
    let mut first_error = None;
    for (i, (req, outcome)) in requests.into_iter().zip(outcomes).enumerate() {
        trace.push_call(Stage::Extract, Some(i), req, &outcome);
        match outcome {
            Ok(resp) => trace.partition_results.push(PartitionResult::from_response(i, &resp, item)),
            Err(e) => {
                first_error.get_or_insert((i, e));
            }
        }
    }
    if let Some((i, e)) = first_error {
        return Err(fail(trace, Stage::Extract, Some(i), e));
    }
    trace.conflict_flag = has_conflict(&trace.partition_results);

    let outcome = context_reduce(&trace.partition_results, item, backend, config);
    match outcome.call {
        Some((req, result)) => {
            trace.push_call(Stage::Reduce, None, req, &result);
            if let Err(e) = result {
                return Err(fail(trace, Stage::Reduce, None, e));
            }
        }
        None => debug!(question = %item.id, "every partition reported no information; reduce skipped"),
    }
    trace.final_answer = outcome.answer;
    Ok(trace)
}

#[derive(Debug)]
pub struct ReduceOutcome {
    pub answer: Answer,
    /// The summarization request and its result; `None` when every partition
    /// reported no information and the backend was not consulted.
    pub call: Option<(ChatRequest, Result<ChatResponse, LlmError>)>,
}

/// One summarization request over the informative partition results, in
/// partition order.
pub fn context_reduce<B: Backend + ?Sized>(
    results: &[PartitionResult],
    item: &QaItem,
    backend: &B,
    config: &PipelineConfig,
) -> ReduceOutcome {
    let blocks: Vec<(usize, &str)> = results
        .iter()
        .filter(|r| !is_sentinel(&r.extracted_info))
        .map(|r| (r.partition_index, r.extracted_info.as_str()))
        .collect();
    if blocks.is_empty() {
        return ReduceOutcome { answer: Answer::Abstain, call: None };
    }
    let req = config.stamp(build_summarization_prompt(item, &blocks, &config.templates, config.max_output_tokens));
    let result = backend.complete(&req);
    let answer = match &result {
        Ok(resp) => parse_final_answer(&resp.text, &item.options),
        Err(_) => Answer::Abstain,
    };
    ReduceOutcome { answer, call: Some((req, result)) }
}

fn single_prompt<B: Backend + ?Sized>(
    trace: AnswerTrace,
    item: &QaItem,
    ranking: &Ranking,
    corpus: &Corpus,
    backend: &B,
    config: &PipelineConfig,
) -> Result<AnswerTrace, PipelineError> {
    let ids: Vec<String> = ranking.ids().take(config.top_k).map(str::to_string).collect();
    let docs = lookup(corpus, item, &ids)?;
    let req = config.stamp(build_answer_prompt(item, &docs, &config.templates, config.max_output_tokens));
    finish_single(trace, item, req, backend)
}

fn finish_single<B: Backend + ?Sized>(
    mut trace: AnswerTrace,
    item: &QaItem,
    req: ChatRequest,
    backend: &B,
) -> Result<AnswerTrace, PipelineError> {
    let outcome = backend.complete(&req);
    trace.push_call(Stage::Answer, None, req, &outcome);
    match outcome {
        Ok(resp) => {
            trace.final_answer = parse_final_answer(&resp.text, &item.options);
            Ok(trace)
        }
        Err(e) => Err(fail(trace, Stage::Answer, None, e)),
    }
}

/// All top-k documents of `ranking` in one prompt, one backend call.
pub fn answer_rag<B: Backend + ?Sized>(
    item: &QaItem,
    ranking: &Ranking,
    corpus: &Corpus,
    backend: &B,
    config: &PipelineConfig,
) -> Result<AnswerTrace, PipelineError> {
    config.validate()?;
    if ranking.is_empty() {
        return Err(retrieval(item)(RankingError::EmptyRanking));
    }
    let mut trace = AnswerTrace::start(item, Mode::Rag, backend);
    trace.rankings.push(ranking.truncated(config.top_k));
    single_prompt(trace, item, ranking, corpus, backend, config)
}

/// Context made of exactly the key documents.
pub fn answer_oracle<B: Backend + ?Sized>(
    item: &QaItem,
    corpus: &Corpus,
    backend: &B,
    config: &PipelineConfig,
) -> Result<AnswerTrace, PipelineError> {
    config.validate()?;
    if item.key_doc_ids.is_empty() {
        return Err(PipelineError::NoKeyDocuments { question_id: item.id.clone() });
    }
    let docs = lookup(corpus, item, &item.key_doc_ids)?;
    let k = item.key_doc_ids.len();
    let ranking = Ranking::from_scores(
        RankerSource::Synthetic,
        item.key_doc_ids.iter().enumerate().map(|(i, id)| (id.clone(), (k - i) as f64)),
        k,
    )
    .map_err(retrieval(item))?;
    let mut trace = AnswerTrace::start(item, Mode::Oracle, backend);
    trace.rankings.push(ranking);
    let req = config.stamp(build_answer_prompt(item, &docs, &config.templates, config.max_output_tokens));
    finish_single(trace, item, req, backend)
}

/// No documents; `cot` appends the step-by-step instruction.
pub fn answer_closed_book<B: Backend + ?Sized>(
    item: &QaItem,
    backend: &B,
    config: &PipelineConfig,
    cot: bool,
) -> Result<AnswerTrace, PipelineError> {
    config.validate()?;
    let mode = if cot { Mode::Cot } else { Mode::ClosedBook };
    let trace = AnswerTrace::start(item, mode, backend);
    let req = config.stamp(build_closed_book_prompt(item, cot, &config.templates, config.max_output_tokens));
    finish_single(trace, item, req, backend)
}

/// Runs `mode` for one item. Retrieval-based modes use the dense top-k.
pub fn answer<B: Backend + ?Sized>(
    mode: Mode,
    item: &QaItem,
    retriever: &Retriever<'_>,
    backend: &B,
    config: &PipelineConfig,
) -> Result<AnswerTrace, PipelineError> {
    match mode {
        Mode::Briefcontext => answer_briefcontext(item, retriever, backend, config),
        Mode::Rag => {
            config.validate()?;
            let ranking = retriever.dense(&item.question, config.top_k).map_err(retrieval(item))?;
            answer_rag(item, &ranking, retriever.corpus, backend, config)
        }
        Mode::Oracle => answer_oracle(item, retriever.corpus, backend, config),
        Mode::Cot => answer_closed_book(item, backend, config, true),
        Mode::ClosedBook => answer_closed_book(item, backend, config, false),
    }
}
