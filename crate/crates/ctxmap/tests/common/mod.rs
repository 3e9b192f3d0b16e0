#![allow(dead_code)]

use std::path::PathBuf;

use ctxmap::core::cost::{CostTally, Pricing};
use ctxmap::core::document::{Corpus, QaItem};
use ctxmap::core::prompt::Answer;
use ctxmap::core::ranking::HashingEmbedder;
use ctxmap::dataprep::synthetic_benchmark;
use ctxmap::pipeline::{AnswerTrace, Condition, Indices, Mode, Retriever};

pub struct World {
    pub corpus: Corpus,
    pub items: Vec<QaItem>,
    pub indices: Indices,
    pub embedder: HashingEmbedder,
}

impl World {
    pub fn new(corpus: Corpus, items: Vec<QaItem>) -> Self {
        let embedder = HashingEmbedder::new(256);
        let indices = Indices::build(&corpus, &embedder).unwrap();
        Self { corpus, items, indices, embedder }
    }

    pub fn benchmark() -> Self {
        let (docs, items) = synthetic_benchmark();
        Self::new(Corpus::from_documents(docs).unwrap(), items)
    }

    pub fn retriever(&self) -> Retriever<'_> {
        Retriever::new(&self.corpus, &self.indices, &self.embedder)
    }
}

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// A bare trace with the given outcome.
pub fn trace(qid: &str, mode: Mode, condition: Condition, correct: bool, conflict: bool) -> AnswerTrace {
    AnswerTrace {
        question_id: qid.into(),
        mode,
        executed: mode,
        condition,
        gold_answer: "A".into(),
        rankings: Vec::new(),
        preflight: None,
        partitions: Vec::new(),
        partition_results: Vec::new(),
        calls: Vec::new(),
        final_answer: Answer::Label(if correct { "A" } else { "B" }.into()),
        conflict_flag: conflict,
        cost: CostTally::new(Pricing::default()),
        error: None,
    }
}
