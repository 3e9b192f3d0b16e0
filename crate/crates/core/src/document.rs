//! Documents, question items and the in-memory corpus.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    #[serde(default)]
    pub title: String,
    #[serde(rename = "text")]
    pub body: String,
}

impl Document {
    pub fn new(id: impl Into<String>, title: impl Into<String>, body: impl Into<String>) -> Self {
        Self { id: id.into(), title: title.into(), body: body.into() }
    }

    /// Title followed by body, the text every ranker sees.
    pub fn full_text(&self) -> String {
        if self.title.is_empty() {
            self.body.clone()
        } else {
            let mut s = String::with_capacity(self.title.len() + 1 + self.body.len());
            s.push_str(&self.title);
            s.push(' ');
            s.push_str(&self.body);
            s
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CorpusError {
    EmptyId,
    EmptyBody(String),
    DuplicateId(String),
    GoldNotAnOption { item: String, gold: String },
    BadOptionLabel { item: String, label: String },
}

impl fmt::Display for CorpusError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CorpusError::EmptyId => write!(f, "document id is empty"),
            CorpusError::EmptyBody(id) => write!(f, "document {id:?} has an empty body"),
            CorpusError::DuplicateId(id) => write!(f, "duplicate document id {id:?}"),
            CorpusError::GoldNotAnOption { item, gold } => {
                write!(f, "item {item:?}: gold answer {gold:?} is not one of its option labels")
            }
            CorpusError::BadOptionLabel { item, label } => {
                write!(f, "item {item:?}: option label {label:?} is not a single uppercase letter")
            }
        }
    }
}

/// Ordered document collection with id lookup.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    documents: Vec<Document>,
    by_id: BTreeMap<String, usize>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_documents(docs: impl IntoIterator<Item = Document>) -> Result<Self, CorpusError> {
        let mut corpus = Self::new();
        for doc in docs {
            corpus.insert(doc)?;
        }
        Ok(corpus)
    }

    pub fn insert(&mut self, doc: Document) -> Result<(), CorpusError> {
        if doc.id.is_empty() {
            return Err(CorpusError::EmptyId);
        }
        if doc.body.is_empty() {
            return Err(CorpusError::EmptyBody(doc.id));
        }
        if self.by_id.contains_key(&doc.id) {
            return Err(CorpusError::DuplicateId(doc.id));
        }
        self.by_id.insert(doc.id.clone(), self.documents.len());
        self.documents.push(doc);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.by_id.get(id).map(|&i| &self.documents[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn iter(&self) -> core::slice::Iter<'_, Document> {
        self.documents.iter()
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a Document;
    type IntoIter = core::slice::Iter<'a, Document>;

    fn into_iter(self) -> Self::IntoIter {
        self.documents.iter()
    }
}

/// A question with optional lettered options and annotated key documents.
/// An empty option map marks an open-ended question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaItem {
    pub id: String,
    pub question: String,
    #[serde(default)]
    pub options: BTreeMap<String, String>,
    pub gold_answer: String,
    #[serde(default)]
    pub key_doc_ids: Vec<String>,
}

impl QaItem {
    pub fn is_open_ended(&self) -> bool {
        self.options.is_empty()
    }

    /// Checks option labels and that the gold answer names one of them.
    /// Duplicate key doc ids are collapsed, keeping first occurrence order.
    pub fn validate(mut self) -> Result<Self, CorpusError> {
        for label in self.options.keys() {
            let mut chars = label.chars();
            let ok = matches!((chars.next(), chars.next()), (Some(c), None) if c.is_ascii_uppercase());
            if !ok {
                return Err(CorpusError::BadOptionLabel { item: self.id.clone(), label: label.clone() });
            }
        }
        if !self.options.is_empty() && !self.options.contains_key(&self.gold_answer) {
            return Err(CorpusError::GoldNotAnOption {
                item: self.id.clone(),
                gold: self.gold_answer.clone(),
            });
        }
        let mut seen = BTreeSet::new();
        self.key_doc_ids.retain(|id| seen.insert(id.clone()));
        Ok(self)
    }
}
