//! Deterministic answer model with a positional bias, used as a stand-in
//! for a real LLM in tests and desk-scale experiments.
//!
//! The "fact" behind each question is the presence of its key documents in
//! the prompt. A key document within `spotlight_window` slots of either end
//! of the context is answered correctly with probability `p_spotlight`, one
//! buried mid-context with `p_middle`, and a prompt with no key document
//! with `p_absent`. Each decision thresholds a single uniform draw keyed by
//! `(seed, question id, prompt content)`, so raising a probability never
//! turns a correct answer into a wrong one.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::chat::{ChatRequest, ChatResponse};
use crate::document::QaItem;
use crate::prompt::{parse_final_answer, parse_prompt, Answer, ParsedDoc, PromptBody, PromptParseError, NO_INFO_SENTINEL};
use crate::text::{fnv1a, fnv1a_extend, mix64, tokenize, unit_interval};

/// Mid-context key documents that stand out lexically are treated as if
/// they sat in a spotlight slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistinctivenessRule {
    /// Required lead of the key document's query-term coverage over the
    /// best non-key document.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScriptedBiasModel {
    pub spotlight_window: usize,
    pub p_spotlight: f64,
    pub p_middle: f64,
    pub p_absent: f64,
    /// Chance that a missed answer names a wrong option instead of the
    /// no-information sentinel.
    pub p_distractor: f64,
    pub distinctiveness: Option<DistinctivenessRule>,
    pub seed: u64,
}

impl Default for ScriptedBiasModel {
    fn default() -> Self {
        Self {
            spotlight_window: 1,
            p_spotlight: 1.0,
            p_middle: 0.1,
            p_absent: 0.0,
            p_distractor: 0.0,
            distinctiveness: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScriptError {
    InvalidModel(&'static str),
    MissingQuestionId,
    Prompt(PromptParseError),
}

impl fmt::Display for ScriptError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScriptError::InvalidModel(why) => write!(f, "invalid scripted model: {why}"),
            ScriptError::MissingQuestionId => f.write_str("request carries no question id"),
            ScriptError::Prompt(e) => write!(f, "unparseable prompt: {e}"),
        }
    }
}

impl From<PromptParseError> for ScriptError {
    fn from(e: PromptParseError) -> Self {
        ScriptError::Prompt(e)
    }
}

/// What the scripted model knows about one question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fact {
    pub gold: String,
    pub key_doc_ids: Vec<String>,
    pub options: BTreeMap<String, String>,
}

impl From<&QaItem> for Fact {
    fn from(item: &QaItem) -> Self {
        Self { gold: item.gold_answer.clone(), key_doc_ids: item.key_doc_ids.clone(), options: item.options.clone() }
    }
}

pub type FactTable = BTreeMap<String, Fact>;

pub fn fact_table<'a>(items: impl IntoIterator<Item = &'a QaItem>) -> FactTable {
    items.into_iter().map(|item| (item.id.clone(), Fact::from(item))).collect()
}

impl ScriptedBiasModel {
    pub fn validate(&self) -> Result<(), ScriptError> {
        if self.spotlight_window == 0 {
            return Err(ScriptError::InvalidModel("spotlight_window must be at least 1"));
        }
        let ordered = 0.0 <= self.p_absent
            && self.p_absent <= self.p_middle
            && self.p_middle <= self.p_spotlight
            && self.p_spotlight <= 1.0;
        if !ordered {
            return Err(ScriptError::InvalidModel("need 0 <= p_absent <= p_middle <= p_spotlight <= 1"));
        }
        if !(0.0..=1.0).contains(&self.p_distractor) {
            return Err(ScriptError::InvalidModel("p_distractor must lie in [0, 1]"));
        }
        Ok(())
    }

    fn draw(&self, question_id: &str, content: &str, stream: u64) -> f64 {
        let mut h = fnv1a(question_id.as_bytes());
        h = fnv1a_extend(h, &[0xff]);
        h = fnv1a_extend(h, content.as_bytes());
        unit_interval(mix64(mix64(h ^ self.seed).wrapping_add(stream)))
    }

    fn in_spotlight(&self, position: usize, len: usize) -> bool {
        position < self.spotlight_window || position + self.spotlight_window >= len
    }

    /// Probability of answering correctly given the documents in context.
    pub fn success_probability(&self, question: &str, docs: &[ParsedDoc], key_ids: &[String]) -> f64 {
        let key_positions: Vec<usize> =
            docs.iter().enumerate().filter(|(_, d)| key_ids.contains(&d.id)).map(|(i, _)| i).collect();
        if key_positions.is_empty() {
            return self.p_absent;
        }
        if key_positions.iter().any(|&p| self.in_spotlight(p, docs.len())) {
            return self.p_spotlight;
        }
        if let Some(rule) = self.distinctiveness {
            if key_is_distinctive(question, docs, key_ids, rule.margin) {
                return self.p_spotlight;
            }
        }
        self.p_middle
    }
}

/// Fraction of distinct query tokens that also occur in `text`.
pub fn query_coverage(query_tokens: &BTreeSet<String>, text: &str) -> f64 {
    if query_tokens.is_empty() {
        return 0.0;
    }
    let doc: BTreeSet<String> = tokenize(text).into_iter().collect();
    query_tokens.intersection(&doc).count() as f64 / query_tokens.len() as f64
}

fn key_is_distinctive(question: &str, docs: &[ParsedDoc], key_ids: &[String], margin: f64) -> bool {
    let q: BTreeSet<String> = tokenize(question).into_iter().collect();
    let mut best_key = f64::NEG_INFINITY;
    let mut best_other = f64::NEG_INFINITY;
    for d in docs {
        let cov = query_coverage(&q, &d.text);
        if key_ids.contains(&d.id) {
            best_key = best_key.max(cov);
        } else {
            best_other = best_other.max(cov);
        }
    }
    best_other == f64::NEG_INFINITY || best_key > best_other + margin
}

fn wrong_option(fact: &Fact, draw: f64) -> Option<&str> {
    let wrong: Vec<&str> = fact.options.keys().map(String::as_str).filter(|l| *l != fact.gold).collect();
    if wrong.is_empty() {
        return None;
    }
    let idx = ((draw * wrong.len() as f64) as usize).min(wrong.len() - 1);
    Some(wrong[idx])
}

fn majority(answers: &[Answer]) -> Option<&Answer> {
    let mut counts: Vec<(&Answer, usize)> = Vec::new();
    for a in answers.iter().filter(|a| !a.is_abstain()) {
        match counts.iter_mut().find(|(b, _)| *b == a) {
            Some((_, n)) => *n += 1,
            None => counts.push((a, 1)),
        }
    }
    // ties go to the answer reported first
    let mut best: Option<(&Answer, usize)> = None;
    for (a, n) in counts {
        if best.is_none_or(|(_, m)| n > m) {
            best = Some((a, n));
        }
    }
    best.map(|(a, _)| a)
}

/// Answers one pipeline-formatted request.
///
/// Document prompts answer by the positional rule. Summarization prompts
/// return the majority of the provisional answers in their info blocks, and
/// prompts without blocks answer closed-book with `p_absent`. Unknown
/// question ids get the no-information sentinel.
pub fn scripted_answer(model: &ScriptedBiasModel, request: &ChatRequest, facts: &FactTable) -> Result<ChatResponse, ScriptError> {
    let qid = request.question_id.as_deref().ok_or(ScriptError::MissingQuestionId)?;
    let parsed = parse_prompt(&request.user_content)?;
    let fact = match facts.get(qid) {
        Some(f) => f,
        None => return Ok(ChatResponse::measured(request, NO_INFO_SENTINEL.to_string())),
    };
    let content = &request.user_content;
    let text = match &parsed.body {
        PromptBody::Documents(docs) => {
            let p = model.success_probability(&parsed.question, docs, &fact.key_doc_ids);
            if model.draw(qid, content, 0) < p {
                let cite = docs.iter().position(|d| fact.key_doc_ids.contains(&d.id)).map_or(1, |i| i + 1);
                format!("[doc {cite}] contains the finding that answers the question.\nANSWER: {}", fact.gold)
            } else if model.draw(qid, content, 1) < model.p_distractor {
                match wrong_option(fact, model.draw(qid, content, 2)) {
                    Some(w) => format!("[doc 1] points toward a different conclusion.\nANSWER: {w}"),
                    None => NO_INFO_SENTINEL.to_string(),
                }
            } else {
                NO_INFO_SENTINEL.to_string()
            }
        }
        PromptBody::Info(blocks) => {
            let answers: Vec<Answer> = blocks.iter().map(|b| parse_final_answer(&b.text, &fact.options)).collect();
            match majority(&answers) {
                Some(a) => format!("Combining {} reports.\nANSWER: {a}", blocks.len()),
                None => NO_INFO_SENTINEL.to_string(),
            }
        }
        PromptBody::Bare => {
            if model.draw(qid, content, 0) < model.p_absent {
                format!("ANSWER: {}", fact.gold)
            } else {
                match wrong_option(fact, model.draw(qid, content, 2)) {
                    Some(w) => format!("ANSWER: {w}"),
                    None => NO_INFO_SENTINEL.to_string(),
                }
            }
        }
    };
    Ok(ChatResponse::measured(request, text))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::document::Document;
    use crate::prompt::{build_answer_prompt, build_closed_book_prompt, build_summarization_prompt, PromptTemplates};
    use alloc::vec;

    fn item() -> QaItem {
        QaItem {
            id: "q1".into(),
            question: "Does aspirin prevent stroke?".into(),
            options: [("A", "yes"), ("B", "no"), ("C", "maybe")].iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            gold_answer: "A".into(),
            key_doc_ids: vec!["key".into()],
        }
    }

    fn docs(n: usize, key_at: Option<usize>) -> Vec<Document> {
        (0..n)
            .map(|i| {
                if Some(i) == key_at {
                    Document::new("key", "", "aspirin prevents stroke")
                } else {
                    Document::new(format!("f{i}"), "", "unrelated filler text")
                }
            })
            .collect()
    }

    fn ask(model: &ScriptedBiasModel, n: usize, key_at: Option<usize>) -> String {
        let d = docs(n, key_at);
        let refs: Vec<&Document> = d.iter().collect();
        let req = build_answer_prompt(&item(), &refs, &PromptTemplates::default(), 64);
        scripted_answer(model, &req, &fact_table([&item()])).unwrap().text
    }

    fn forced() -> ScriptedBiasModel {
        ScriptedBiasModel { p_middle: 0.0, ..ScriptedBiasModel::default() }
    }

    #[test]
    fn spotlight_key_is_answered() {
        let text = ask(&forced(), 8, Some(0));
        assert!(text.ends_with("ANSWER: A"), "{text}");
        assert!(ask(&forced(), 8, Some(7)).ends_with("ANSWER: A"));
    }

    #[test]
    fn buried_key_is_missed() {
        assert_eq!(ask(&forced(), 16, Some(8)), NO_INFO_SENTINEL);
        assert_eq!(ask(&forced(), 8, None), NO_INFO_SENTINEL);
    }

    #[test]
    fn deterministic_under_seed() {
        let m = ScriptedBiasModel { p_middle: 0.5, seed: 7, ..ScriptedBiasModel::default() };
        assert_eq!(ask(&m, 16, Some(8)), ask(&m, 16, Some(8)));
    }

    #[test]
    fn distractors_name_wrong_options() {
        let m = ScriptedBiasModel { p_middle: 0.0, p_distractor: 1.0, ..ScriptedBiasModel::default() };
        let text = ask(&m, 16, Some(8));
        let a = parse_final_answer(&text, &item().options);
        assert!(matches!(a, Answer::Label(ref l) if l != "A"), "{text}");
    }

    #[test]
    fn distinctive_key_survives_mid_context() {
        let m = ScriptedBiasModel {
            p_middle: 0.0,
            distinctiveness: Some(DistinctivenessRule { margin: 0.0 }),
            ..ScriptedBiasModel::default()
        };
        assert!(ask(&m, 16, Some(8)).ends_with("ANSWER: A"));
        // a filler covering the query as well as the key removes the lead
        let mut d = docs(16, Some(8));
        d[3] = Document::new("f3", "", "does aspirin prevent stroke");
        let refs: Vec<&Document> = d.iter().collect();
        let req = build_answer_prompt(&item(), &refs, &PromptTemplates::default(), 64);
        assert_eq!(scripted_answer(&m, &req, &fact_table([&item()])).unwrap().text, NO_INFO_SENTINEL);
    }

    #[test]
    fn summarization_takes_majority() {
        let t = PromptTemplates::default();
        let req = build_summarization_prompt(&item(), &[(0, "x\nANSWER: B"), (1, "y\nANSWER: A"), (2, "z\nANSWER: A")], &t, 64);
        let r = scripted_answer(&forced(), &req, &fact_table([&item()])).unwrap();
        assert!(r.text.ends_with("ANSWER: A"));
        let tie = build_summarization_prompt(&item(), &[(0, "ANSWER: B"), (1, "ANSWER: A")], &t, 64);
        assert!(scripted_answer(&forced(), &tie, &fact_table([&item()])).unwrap().text.ends_with("ANSWER: B"));
    }

    #[test]
    fn closed_book_uses_absent_probability() {
        let t = PromptTemplates::default();
        let req = build_closed_book_prompt(&item(), false, &t, 16);
        let sure = ScriptedBiasModel { p_absent: 1.0, p_middle: 1.0, ..ScriptedBiasModel::default() };
        assert_eq!(scripted_answer(&sure, &req, &fact_table([&item()])).unwrap().text, "ANSWER: A");
        let never = scripted_answer(&forced(), &req, &fact_table([&item()])).unwrap().text;
        assert!(never.starts_with("ANSWER: ") && !never.ends_with('A'));
    }

    #[test]
    fn errors_and_unknown_questions() {
        let mut req = ChatRequest::new("s", "no question here", 8).for_question("q1");
        assert!(matches!(scripted_answer(&forced(), &req, &FactTable::new()), Err(ScriptError::Prompt(_))));
        req.question_id = None;
        assert_eq!(scripted_answer(&forced(), &req, &FactTable::new()), Err(ScriptError::MissingQuestionId));
        let ok = ChatRequest::new("s", "Question: what?", 8).for_question("zz");
        assert_eq!(scripted_answer(&forced(), &ok, &FactTable::new()).unwrap().text, NO_INFO_SENTINEL);
    }

    #[test]
    fn model_validation() {
        assert!(ScriptedBiasModel::default().validate().is_ok());
        let bad = ScriptedBiasModel { p_middle: 0.9, p_spotlight: 0.5, ..ScriptedBiasModel::default() };
        assert!(bad.validate().is_err());
        assert!(ScriptedBiasModel { spotlight_window: 0, ..ScriptedBiasModel::default() }.validate().is_err());
    }

    #[test]
    fn usage_is_measured() {
        let d = docs(2, Some(0));
        let refs: Vec<&Document> = d.iter().collect();
        let req = build_answer_prompt(&item(), &refs, &PromptTemplates::default(), 64);
        let r = scripted_answer(&forced(), &req, &fact_table([&item()])).unwrap();
        assert_eq!(r.input_tokens, req.input_tokens());
        assert_eq!(r.output_tokens.0, tokenize(&r.text).len() as u64);
    }
}
