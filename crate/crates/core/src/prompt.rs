//! Prompt layout for extraction, summarization and single-pass answering,
//! the matching parsers, and final-answer extraction.
//!
//! Context prompts number each document as `[doc i] [<id>] <title>` on its
//! own line followed by the body. Summarization prompts carry one
//! `[info p]` block per partition that reported something. The question
//! is placed ahead of the documents and restated after them.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::chat::ChatRequest;
use crate::document::{Document, QaItem};
use crate::text::tokenize;

/// Reply an extraction request must give when its documents say nothing
/// about the question. Matched case-insensitively after trimming.
pub const NO_INFO_SENTINEL: &str = "NO RELEVANT INFORMATION";

pub fn is_sentinel(text: &str) -> bool {
    text.trim().eq_ignore_ascii_case(NO_INFO_SENTINEL)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptTemplates {
    pub extraction_instruction: String,
    pub summarization_instruction: String,
    pub answer_instruction: String,
    pub closed_book_instruction: String,
    pub cot_suffix: String,
    /// Layout of prompts that carry documents; placeholders `{question}`,
    /// `{options}`, `{documents}`.
    pub context_layout: String,
    /// Layout of the summarization prompt; `{documents}` receives the
    /// `[info p]` blocks.
    pub reduce_layout: String,
    pub closed_book_layout: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            extraction_instruction: "You will be given a question followed by a numbered set of documents. \
Extract the information from these documents that is relevant to answering the question and cite the document numbers you used. \
If none of the documents contains information relevant to the question, reply with exactly NO RELEVANT INFORMATION and nothing else. \
Otherwise finish with a provisional choice on its own line in the form ANSWER: <option letter> \
(or ANSWER: <short answer> when the question has no options)."
                .to_string(),
            summarization_instruction: "You will be given a question and information that was extracted from several groups of documents. \
Ignore any group that reports no relevant information. \
Combine the remaining information, weigh any disagreement between groups, and answer the question. \
Finish with a line of the form ANSWER: <option letter> (or ANSWER: <short answer> when the question has no options)."
                .to_string(),
            answer_instruction: "You will be given a question followed by a numbered set of documents. \
Use the documents to answer the question. \
Finish with a line of the form ANSWER: <option letter> (or ANSWER: <short answer> when the question has no options)."
                .to_string(),
            closed_book_instruction: "Answer the following question. \
Finish with a line of the form ANSWER: <option letter> (or ANSWER: <short answer> when the question has no options)."
                .to_string(),
            cot_suffix: " Explain your reasoning step-by-step before giving the final answer.".to_string(),
            context_layout: "Question: {question}\n{options}\n\n{documents}\n\nQuestion: {question}\n{options}".to_string(),
            reduce_layout: "Question: {question}\n{options}\n\n{documents}\n\nQuestion: {question}\n{options}".to_string(),
            closed_book_layout: "Question: {question}\n{options}".to_string(),
        }
    }
}

/// Single-pass substitution of `{question}`, `{options}` and `{documents}`.
/// Substituted text is never re-scanned; unknown braces are copied as is.
pub fn render(template: &str, question: &str, options: &str, documents: &str) -> String {
    let mut out = String::with_capacity(template.len() + question.len() * 2 + documents.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        let (value, skip) = if tail.starts_with("{question}") {
            (Some(question), "{question}".len())
        } else if tail.starts_with("{options}") {
            (Some(options), "{options}".len())
        } else if tail.starts_with("{documents}") {
            (Some(documents), "{documents}".len())
        } else {
            (None, 1)
        };
        match value {
            Some(v) => out.push_str(v),
            None => out.push('{'),
        }
        rest = &tail[skip..];
    }
    out.push_str(rest);
    out
}

pub fn render_options(options: &BTreeMap<String, String>) -> String {
    let mut s = String::new();
    for (i, (label, text)) in options.iter().enumerate() {
        if i > 0 {
            s.push('\n');
        }
        let _ = write!(s, "({label}) {text}");
    }
    s
}

pub fn render_documents(docs: &[&Document]) -> String {
    let mut s = String::new();
    for (i, doc) in docs.iter().enumerate() {
        if i > 0 {
            s.push_str("\n\n");
        }
        let _ = write!(s, "[doc {}] [{}]", i + 1, doc.id);
        if !doc.title.is_empty() {
            s.push(' ');
            s.push_str(&doc.title);
        }
        s.push('\n');
        s.push_str(&doc.body);
    }
    s
}

/// `(partition_index, extracted text)` pairs, labelled 1-based by partition.
pub fn render_info_blocks(blocks: &[(usize, &str)]) -> String {
    let mut s = String::new();
    for (i, (partition, text)) in blocks.iter().enumerate() {
        if i > 0 {
            s.push_str("\n\n");
        }
        let _ = write!(s, "[info {}]\n{}", partition + 1, text.trim());
    }
    s
}

fn request(item: &QaItem, system: String, user: String, max_output_tokens: u32) -> ChatRequest {
    ChatRequest::new(system, user, max_output_tokens).for_question(item.id.clone())
}

fn context_prompt(instruction: &str, item: &QaItem, docs: &[&Document], t: &PromptTemplates, max_out: u32) -> ChatRequest {
    let options = render_options(&item.options);
    let documents = render_documents(docs);
    let system = render(instruction, &item.question, &options, "");
    let user = render(&t.context_layout, &item.question, &options, &documents);
    request(item, system, user, max_out)
}

/// Map-step prompt for one partition.
pub fn build_extraction_prompt(item: &QaItem, docs: &[&Document], t: &PromptTemplates, max_out: u32) -> ChatRequest {
    context_prompt(&t.extraction_instruction, item, docs, t, max_out)
}

/// Single prompt holding every document, used by plain retrieval answering
/// and the oracle setting.
pub fn build_answer_prompt(item: &QaItem, docs: &[&Document], t: &PromptTemplates, max_out: u32) -> ChatRequest {
    context_prompt(&t.answer_instruction, item, docs, t, max_out)
}

pub fn build_summarization_prompt(item: &QaItem, blocks: &[(usize, &str)], t: &PromptTemplates, max_out: u32) -> ChatRequest {
    let options = render_options(&item.options);
    let system = render(&t.summarization_instruction, &item.question, &options, "");
    let user = render(&t.reduce_layout, &item.question, &options, &render_info_blocks(blocks));
    request(item, system, user, max_out)
}

pub fn build_closed_book_prompt(item: &QaItem, cot: bool, t: &PromptTemplates, max_out: u32) -> ChatRequest {
    let options = render_options(&item.options);
    let mut instruction = render(&t.closed_book_instruction, &item.question, &options, "");
    if cot {
        instruction.push_str(&t.cot_suffix);
    }
    let user = render(&t.closed_book_layout, &item.question, &options, "");
    request(item, instruction, user, max_out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedDoc {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedInfo {
    pub label: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PromptBody {
    Documents(Vec<ParsedDoc>),
    Info(Vec<ParsedInfo>),
    Bare,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedPrompt {
    pub question: String,
    pub body: PromptBody,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PromptParseError {
    MissingQuestion,
    MalformedHeader(String),
    OutOfSequence { expected: usize, found: usize },
}

impl fmt::Display for PromptParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PromptParseError::MissingQuestion => f.write_str("prompt has no `Question:` line"),
            PromptParseError::MalformedHeader(line) => write!(f, "malformed block header {line:?}"),
            PromptParseError::OutOfSequence { expected, found } => {
                write!(f, "document block numbered {found}, expected {expected}")
            }
        }
    }
}

fn parse_number_prefix(s: &str) -> Option<(usize, &str)> {
    let digits = s.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return None;
    }
    s[..digits].parse().ok().map(|n| (n, &s[digits..]))
}

enum Header {
    Doc(usize, String, String),
    Info(usize),
}

fn parse_header(line: &str) -> Result<Option<Header>, PromptParseError> {
    let bad = || PromptParseError::MalformedHeader(line.to_string());
    if let Some(rest) = line.strip_prefix("[doc ") {
        let (n, rest) = parse_number_prefix(rest).ok_or_else(bad)?;
        let rest = rest.strip_prefix("] [").ok_or_else(bad)?;
        let close = rest.find(']').ok_or_else(bad)?;
        let id = &rest[..close];
        if id.is_empty() {
            return Err(bad());
        }
        let title = rest[close + 1..].trim();
        return Ok(Some(Header::Doc(n, id.to_string(), title.to_string())));
    }
    if let Some(rest) = line.strip_prefix("[info ") {
        let (n, rest) = parse_number_prefix(rest).ok_or_else(bad)?;
        if rest.trim() != "]" {
            return Err(bad());
        }
        return Ok(Some(Header::Info(n)));
    }
    Ok(None)
}

/// Recovers the question and the document or info blocks from a prompt
/// built by this module.
///
/// The first block header fixes the prompt kind. After that only headers
/// of the same kind open a new block (documents must also be numbered in
/// sequence); any other line, including one that merely looks like a
/// header, is block content. A block ends at the next header or at the
/// restated question.
pub fn parse_prompt(user_content: &str) -> Result<ParsedPrompt, PromptParseError> {
    let mut question: Option<String> = None;
    let mut docs: Vec<ParsedDoc> = Vec::new();
    let mut infos: Vec<ParsedInfo> = Vec::new();
    let mut in_block = false;
    for line in user_content.lines() {
        if let Some(q) = line.strip_prefix("Question:") {
            match &question {
                None => {
                    question = Some(q.trim().to_string());
                    in_block = false;
                    continue;
                }
                Some(first) if first == q.trim() => {
                    in_block = false;
                    continue;
                }
                Some(_) => {}
            }
        }
        let header = if docs.is_empty() && infos.is_empty() {
            parse_header(line)?
        } else {
            match parse_header(line) {
                Ok(Some(Header::Doc(n, id, title))) if !docs.is_empty() && n == docs.len() + 1 => {
                    Some(Header::Doc(n, id, title))
                }
                Ok(Some(Header::Info(n))) if !infos.is_empty() => Some(Header::Info(n)),
                _ => None,
            }
        };
        match header {
            Some(Header::Doc(n, id, title)) => {
                if n != 1 && docs.is_empty() {
                    return Err(PromptParseError::OutOfSequence { expected: 1, found: n });
                }
                docs.push(ParsedDoc { id, text: title });
                in_block = true;
            }
            Some(Header::Info(label)) => {
                infos.push(ParsedInfo { label, text: String::new() });
                in_block = true;
            }
            None if in_block => {
                let buf = if let Some(d) = docs.last_mut() { &mut d.text } else { &mut infos.last_mut().expect("block open").text };
                if !buf.is_empty() {
                    buf.push('\n');
                }
                buf.push_str(line);
            }
            None => {}
        }
    }
    let question = question.ok_or(PromptParseError::MissingQuestion)?;
    let trim = |s: &mut String| {
        let t = s.trim_end().len();
        s.truncate(t);
    };
    docs.iter_mut().for_each(|d| trim(&mut d.text));
    infos.iter_mut().for_each(|i| trim(&mut i.text));
    let body = if !docs.is_empty() {
        PromptBody::Documents(docs)
    } else if !infos.is_empty() {
        PromptBody::Info(infos)
    } else {
        PromptBody::Bare
    };
    Ok(ParsedPrompt { question, body })
}

/// A parsed final or provisional answer.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Answer {
    Label(String),
    Text(String),
    Abstain,
}

impl Answer {
    pub fn is_abstain(&self) -> bool {
        matches!(self, Answer::Abstain)
    }

    /// Abstentions are never correct. Free-text answers are correct when
    /// the gold answer's tokens appear contiguously in them.
    pub fn is_correct(&self, gold: &str) -> bool {
        match self {
            Answer::Label(l) => l == gold,
            Answer::Text(t) => {
                let gold_tokens = tokenize(gold);
                !gold_tokens.is_empty() && contains_run(&tokenize(t), &gold_tokens)
            }
            Answer::Abstain => false,
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Answer::Label(l) => f.write_str(l),
            Answer::Text(t) => f.write_str(t),
            Answer::Abstain => f.write_str("<abstain>"),
        }
    }
}

fn contains_run(haystack: &[String], needle: &[String]) -> bool {
    needle.is_empty() || haystack.windows(needle.len()).any(|w| w == needle)
}

fn option_label(c: char, options: &BTreeMap<String, String>) -> Option<String> {
    let upper = c.to_ascii_uppercase();
    let mut buf = [0u8; 4];
    let key: &str = upper.encode_utf8(&mut buf);
    options.contains_key(key).then(|| key.to_string())
}

fn find_ci(haystack: &str, needle: &str, from: usize) -> Option<usize> {
    let h = haystack.as_bytes();
    let n = needle.as_bytes();
    (from..=h.len().checked_sub(n.len())?).find(|&i| h[i..i + n.len()].eq_ignore_ascii_case(n))
}

/// Text after the last `ANSWER:` marker, if any.
fn anchored_tail(text: &str) -> Option<&str> {
    let mut last = None;
    let mut from = 0;
    while let Some(pos) = find_ci(text, "answer:", from) {
        last = Some(pos + "answer:".len());
        from = pos + 1;
    }
    last.map(|p| &text[p..])
}

fn anchored_label(text: &str, options: &BTreeMap<String, String>) -> Option<String> {
    let mut from = 0;
    let mut found = None;
    while let Some(pos) = find_ci(text, "answer:", from) {
        let tail = text[pos + "answer:".len()..].trim_start();
        let tail = tail.strip_prefix('(').unwrap_or(tail);
        let mut chars = tail.chars();
        if let Some(c) = chars.next() {
            let terminated = chars.next().is_none_or(|n| !n.is_alphanumeric());
            if terminated {
                if let Some(l) = option_label(c, options) {
                    found = Some(l);
                }
            }
        }
        from = pos + 1;
    }
    found
}

fn delimited_label(text: &str, options: &BTreeMap<String, String>) -> Option<String> {
    let chars: Vec<char> = text.chars().collect();
    for i in 0..chars.len() {
        let c = chars[i];
        if !c.is_ascii_alphabetic() {
            continue;
        }
        let before = if i == 0 { None } else { Some(chars[i - 1]) };
        let after = chars.get(i + 1).copied();
        let after2 = chars.get(i + 2).copied();
        let clean_end = after2.is_none_or(|n| !n.is_alphanumeric());
        let hit = match (before, after) {
            (Some('('), Some(')')) => true,
            (b, Some('.' | ')')) => b.is_none_or(|b| !b.is_alphanumeric() && b != '(' && b != '.') && clean_end,
            _ => false,
        };
        if hit {
            if let Some(l) = option_label(c, options) {
                return Some(l);
            }
        }
    }
    None
}

/// Maps a completion onto an option label, free text, or an abstention.
///
/// Multiple-choice completions are tried against, in order: an `ANSWER: X`
/// marker (the last one wins), a delimited option letter such as `(A)`,
/// `A.` or `A)`, then word-level containment of an option's text. Anything
/// else, and the no-information sentinel, is an abstention.
pub fn parse_final_answer(completion: &str, options: &BTreeMap<String, String>) -> Answer {
    if is_sentinel(completion) || completion.trim().is_empty() {
        return Answer::Abstain;
    }
    if options.is_empty() {
        let text = anchored_tail(completion).map(|t| t.lines().next().unwrap_or("")).unwrap_or(completion).trim();
        if text.is_empty() || is_sentinel(text) {
            return Answer::Abstain;
        }
        return Answer::Text(text.to_string());
    }
    if let Some(l) = anchored_label(completion, options) {
        return Answer::Label(l);
    }
    if let Some(l) = delimited_label(completion, options) {
        return Answer::Label(l);
    }
    let words = tokenize(completion);
    for (label, text) in options {
        let needle = tokenize(text);
        if !needle.is_empty() && contains_run(&words, &needle) {
            return Answer::Label(label.clone());
        }
    }
    Answer::Abstain
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn abc() -> BTreeMap<String, String> {
        [("A", "aspirin"), ("B", "beta blockers"), ("C", "calcium")]
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    fn item() -> QaItem {
        QaItem {
            id: "q1".into(),
            question: "Which drug lowers risk?".into(),
            options: abc(),
            gold_answer: "A".into(),
            key_doc_ids: vec!["d1".into()],
        }
    }

    #[test]
    fn answer_parsing_rules() {
        let o = abc();
        assert_eq!(parse_final_answer("ANSWER: B \u{2014} because of trials", &o), Answer::Label("B".into()));
        assert_eq!(parse_final_answer("The correct choice is (c).", &o), Answer::Label("C".into()));
        assert_eq!(parse_final_answer("Unable to determine.", &o), Answer::Abstain);
        assert_eq!(parse_final_answer("I'd go with A.", &o), Answer::Label("A".into()));
        assert_eq!(parse_final_answer("Probably beta blockers here", &o), Answer::Label("B".into()));
        assert_eq!(parse_final_answer("no relevant information ", &o), Answer::Abstain);
        assert_eq!(parse_final_answer("ANSWER: A\nlater ANSWER: (C)", &o), Answer::Label("C".into()));
        // abbreviations are not delimited letters
        assert_eq!(parse_final_answer("see e.g. the notes", &o), Answer::Abstain);
        assert_eq!(parse_final_answer("answer: Z", &o), Answer::Abstain);
    }

    #[test]
    fn open_ended_answers() {
        let none = BTreeMap::new();
        assert_eq!(parse_final_answer("Reasoning...\nANSWER: Metformin\n", &none), Answer::Text("Metformin".into()));
        assert_eq!(parse_final_answer("NO RELEVANT INFORMATION", &none), Answer::Abstain);
        assert!(Answer::Text("metformin, first line".into()).is_correct("Metformin"));
        assert!(!Answer::Abstain.is_correct("A"));
    }

    #[test]
    fn extraction_prompt_layout() {
        let d1 = Document::new("d1", "Trial", "Aspirin lowered risk.");
        let d2 = Document::new("d2", "", "Unrelated.");
        let t = PromptTemplates::default();
        let req = build_extraction_prompt(&item(), &[&d1, &d2], &t, 64);
        let u = &req.user_content;
        let q = u.find("Which drug lowers risk?").unwrap();
        let b1 = u.find("[doc 1] [d1] Trial\nAspirin lowered risk.").unwrap();
        let b2 = u.find("[doc 2] [d2]\nUnrelated.").unwrap();
        assert!(q < b1 && b1 < b2);
        assert!(u.rfind("Which drug lowers risk?").unwrap() > b2);
        assert!(req.system_instruction.contains(NO_INFO_SENTINEL));
        assert_eq!(req.question_id.as_deref(), Some("q1"));
        assert_eq!(req, build_extraction_prompt(&item(), &[&d1, &d2], &t, 64));
        let single = build_extraction_prompt(&item(), &[&d1], &t, 64);
        assert_eq!(single.user_content.matches("[doc ").count(), 1);
    }

    #[test]
    fn prompt_round_trips_through_parser() {
        let d1 = Document::new("d1", "Trial", "Line one.\nLine two.");
        let d2 = Document::new("pmid-2", "", "Body.");
        let req = build_answer_prompt(&item(), &[&d1, &d2], &PromptTemplates::default(), 64);
        let parsed = parse_prompt(&req.user_content).unwrap();
        assert_eq!(parsed.question, "Which drug lowers risk?");
        match parsed.body {
            PromptBody::Documents(docs) => {
                assert_eq!(docs.len(), 2);
                assert_eq!(docs[0].id, "d1");
                assert_eq!(docs[0].text, "Trial\nLine one.\nLine two.");
                assert_eq!(docs[1].id, "pmid-2");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn summarization_prompt_blocks() {
        let req = build_summarization_prompt(&item(), &[(0, "info A\nANSWER: A"), (2, "info C")], &PromptTemplates::default(), 64);
        assert!(req.user_content.contains("[info 1]\ninfo A"));
        assert!(req.user_content.contains("[info 3]\ninfo C"));
        match parse_prompt(&req.user_content).unwrap().body {
            PromptBody::Info(blocks) => {
                assert_eq!(blocks.iter().map(|b| b.label).collect::<Vec<_>>(), [1, 3]);
                assert_eq!(blocks[0].text, "info A\nANSWER: A");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn closed_book_prompt_is_bare() {
        let t = PromptTemplates::default();
        let plain = build_closed_book_prompt(&item(), false, &t, 16);
        let cot = build_closed_book_prompt(&item(), true, &t, 16);
        assert!(cot.system_instruction.contains("step-by-step"));
        assert!(!plain.system_instruction.contains("step-by-step"));
        assert_eq!(parse_prompt(&plain.user_content).unwrap().body, PromptBody::Bare);
    }

    #[test]
    fn parser_rejects_bad_prompts() {
        assert_eq!(parse_prompt("[doc 1] [a]\nx"), Err(PromptParseError::MissingQuestion));
        assert!(matches!(
            parse_prompt("Question: q\n[doc 2] [a]\nx"),
            Err(PromptParseError::OutOfSequence { expected: 1, found: 2 })
        ));
        assert!(matches!(parse_prompt("Question: q\n[doc 1] a\nx"), Err(PromptParseError::MalformedHeader(_))));
    }

    #[test]
    fn header_lookalikes_are_content() {
        let p = parse_prompt("Question: q\n[doc 1] [a]\n[info 1]\n[doc 3] [b]\nQuestion: other\n[doc 2] [c]\nQuestion: q").unwrap();
        let docs = match p.body {
            PromptBody::Documents(d) => d,
            other => panic!("unexpected {other:?}"),
        };
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].text, "[info 1]\n[doc 3] [b]\nQuestion: other");
        let p = parse_prompt("Question: q\n[info 2]\n[doc 1] [x] cites\nANSWER: A\n[info 4]\nNO\n\nQuestion: q").unwrap();
        match p.body {
            PromptBody::Info(blocks) => {
                assert_eq!(blocks.iter().map(|b| b.label).collect::<Vec<_>>(), [2, 4]);
                assert_eq!(blocks[0].text, "[doc 1] [x] cites\nANSWER: A");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn render_does_not_rescan_substitutions() {
        assert_eq!(render("{question}|{documents}|{x}", "{documents}", "", "D"), "{documents}|D|{x}");
    }
}
