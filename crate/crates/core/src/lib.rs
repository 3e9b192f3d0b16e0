//! Allocation-only building blocks for map-reduce retrieval-augmented answering.
//!
//! Everything here is pure: tokenization, dense and lexical ranking, rank
//! fusion, the ranking-consistency preflight check, context partitioning,
//! prompt layout and parsing, the token cost model, a deterministic
//! position-biased answer model used as a test double, and evaluation
//! metrics. IO, network backends and orchestration live in the `ctxmap`
//! crate.

#![no_std]

extern crate alloc;

pub mod chat;
pub mod cost;
pub mod document;
pub mod metrics;
pub mod partition;
pub mod preflight;
pub mod prompt;
pub mod ranking;
pub mod scripted;
pub mod text;

pub use chat::{ChatRequest, ChatResponse};
pub use cost::{cost_briefcontext, cost_vanilla, CostTally, Money, Pricing, TokenCount};
pub use document::{Corpus, CorpusError, Document, QaItem};
pub use partition::{context_map, Partition};
pub use preflight::{iou_at_n, label_issue_occurrence, preflight_check, PreflightConfig, PreflightVerdict};
pub use prompt::{parse_final_answer, Answer, PromptTemplates, NO_INFO_SENTINEL};
pub use ranking::{Ranking, RankerSource, RankingError};
pub use text::tokenize;
