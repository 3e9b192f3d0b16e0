//! Line-delimited JSON readers and writers: corpora, QA datasets, the dense
//! index cache, traces.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ctxmap_core::document::{Corpus, Document, QaItem};
use ctxmap_core::ranking::{DenseEntry, DenseIndex};
use ctxmap_core::text::{fnv1a, fnv1a_extend};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {detail}")]
    Malformed { path: PathBuf, line: usize, detail: String },
    #[error("{path}:{line}: {detail}")]
    Invalid { path: PathBuf, line: usize, detail: String },
    #[error("{path}: {detail}")]
    BadCache { path: PathBuf, detail: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    #[default]
    Jsonl,
}

impl FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            other => Err(format!("unknown corpus format {other:?} (supported: jsonl)")),
        }
    }
}

/// Non-blank lines of a file, numbered from 1.
fn numbered_lines(path: &Path) -> Result<Vec<(usize, String)>, IoError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

pub fn ingest_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus, IoError> {
    match format {
        CorpusFormat::Jsonl => {}
    }
    let mut corpus = Corpus::new();
    for (line_no, line) in numbered_lines(path)? {
        let doc: Document = serde_json::from_str(&line).map_err(|e| IoError::Malformed {
            path: path.to_path_buf(),
            line: line_no,
            detail: e.to_string(),
        })?;
        corpus.insert(doc).map_err(|e| IoError::Invalid {
            path: path.to_path_buf(),
            line: line_no,
            detail: e.to_string(),
        })?;
    }
    Ok(corpus)
}

pub fn write_corpus(path: &Path, corpus: &Corpus) -> Result<(), IoError> {
    write_jsonl(path, corpus.documents())
}

#[derive(Deserialize)]
struct QaRecord {
    id: String,
    question: String,
    #[serde(default)]
    options: Option<BTreeMap<String, String>>,
    gold_answer: String,
    #[serde(default)]
    key_doc_ids: Option<Vec<String>>,
}

pub fn ingest_qa(path: &Path) -> Result<Vec<QaItem>, IoError> {
    let mut items: Vec<QaItem> = Vec::new();
    for (line_no, line) in numbered_lines(path)? {
        let rec: QaRecord = serde_json::from_str(&line).map_err(|e| IoError::Malformed {
            path: path.to_path_buf(),
            line: line_no,
            detail: e.to_string(),
        })?;
        let item = QaItem {
            id: rec.id,
            question: rec.question,
            options: rec.options.unwrap_or_default(),
            gold_answer: rec.gold_answer,
            key_doc_ids: rec.key_doc_ids.unwrap_or_default(),
        };
        let invalid = |detail: String| IoError::Invalid { path: path.to_path_buf(), line: line_no, detail };
        if items.iter().any(|i| i.id == item.id) {
            return Err(invalid(format!("duplicate item id {:?}", item.id)));
        }
        items.push(item.validate().map_err(|e| invalid(e.to_string()))?);
    }
    Ok(items)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), IoError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("records serialize");
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    numbered_lines(path)?
        .into_iter()
        .map(|(line_no, line)| {
            serde_json::from_str(&line).map_err(|e| IoError::Malformed {
                path: path.to_path_buf(),
                line: line_no,
                detail: e.to_string(),
            })
        })
        .collect()
}

/// Hash of every document's id, title and body, in corpus order.
pub fn corpus_fingerprint(corpus: &Corpus) -> String {
    let mut h = fnv1a(b"corpus");
    for d in corpus {
        for part in [d.id.as_bytes(), d.title.as_bytes(), d.body.as_bytes()] {
            h = fnv1a_extend(h, part);
            h = fnv1a_extend(h, &[0]);
        }
    }
    format!("{h:016x}")
}

pub const INDEX_CACHE_FORMAT: &str = "ctxmap-dense-index";

/// First line of a dense index cache file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexHeader {
    pub format: String,
    pub version: u32,
    pub provider: String,
    pub dimension: usize,
    pub count: usize,
    pub corpus_fingerprint: String,
}

/// Writes the header line followed by one `{"id", "vector"}` line per entry.
/// Vectors are written with shortest round-trip float formatting, so
/// reading the file back reproduces the index exactly.
pub fn write_dense_index(path: &Path, index: &DenseIndex, provider: &str, fingerprint: &str) -> Result<(), IoError> {
    let header = IndexHeader {
        format: INDEX_CACHE_FORMAT.into(),
        version: 1,
        provider: provider.into(),
        dimension: index.dimension(),
        count: index.len(),
        corpus_fingerprint: fingerprint.into(),
    };
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{}", serde_json::to_string(&header).expect("header serializes")).map_err(io_err(path))?;
    for e in index.entries() {
        writeln!(w, "{}", serde_json::to_string(e).expect("entry serializes")).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_dense_index(path: &Path) -> Result<(IndexHeader, DenseIndex), IoError> {
    let mut lines = numbered_lines(path)?.into_iter();
    let bad = |detail: String| IoError::BadCache { path: path.to_path_buf(), detail };
    let (_, first) = lines.next().ok_or_else(|| bad("empty cache file".into()))?;
    let header: IndexHeader = serde_json::from_str(&first).map_err(|e| bad(format!("bad header: {e}")))?;
    if header.format != INDEX_CACHE_FORMAT || header.version != 1 {
        return Err(bad(format!("unsupported cache format {} v{}", header.format, header.version)));
    }
    let entries: Vec<DenseEntry> = lines
        .map(|(n, l)| serde_json::from_str(&l).map_err(|e| bad(format!("line {n}: {e}"))))
        .collect::<Result<_, _>>()?;
    if entries.len() != header.count {
        return Err(bad(format!("header promises {} entries, found {}", header.count, entries.len())));
    }
    let index = DenseIndex::from_entries(header.dimension, entries).map_err(|e| bad(e.to_string()))?;
    Ok((header, index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ctxmap_core::ranking::{build_dense_index, HashingEmbedder};

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn corpus_order_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let ok = write(
            dir.path(),
            "c.jsonl",
            "{\"id\":\"d1\",\"text\":\"a\"}\n{\"id\":\"d2\",\"title\":\"T\",\"text\":\"b\"}\n\n{\"id\":\"d3\",\"text\":\"c\",\"pmid\":1}\n",
        );
        let c = ingest_corpus(&ok, CorpusFormat::Jsonl).unwrap();
        assert_eq!(c.iter().map(|d| d.id.as_str()).collect::<Vec<_>>(), ["d1", "d2", "d3"]);
        assert_eq!(c.get("d2").unwrap().title, "T");

        let empty = write(dir.path(), "e.jsonl", "");
        assert!(ingest_corpus(&empty, CorpusFormat::Jsonl).unwrap().is_empty());

        let dup = write(dir.path(), "d.jsonl", "{\"id\":\"d1\",\"text\":\"a\"}\n{\"id\":\"d2\",\"text\":\"b\"}\n{\"id\":\"d1\",\"text\":\"c\"}\n");
        let err = ingest_corpus(&dup, CorpusFormat::Jsonl).unwrap_err().to_string();
        assert!(err.contains("\"d1\"") && err.contains(":3:"), "{err}");

        let bad = write(dir.path(), "b.jsonl", "{\"id\":\"d1\",\"text\":\"a\"}\n{\"id\":\"d2\"}\n");
        let err = ingest_corpus(&bad, CorpusFormat::Jsonl).unwrap_err();
        assert!(matches!(err, IoError::Malformed { line: 2, .. }), "{err}");

        assert!(matches!(ingest_corpus(&dir.path().join("missing"), CorpusFormat::Jsonl), Err(IoError::Io { .. })));
    }

    #[test]
    fn qa_records() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "qa.jsonl",
            concat!(
                "{\"id\":\"q1\",\"question\":\"?\",\"options\":{\"A\":\"yes\",\"B\":\"no\"},\"gold_answer\":\"A\",\"key_doc_ids\":[\"d1\"]}\n",
                "{\"id\":\"q2\",\"question\":\"what?\",\"gold_answer\":\"metformin\"}\n"
            ),
        );
        let items = ingest_qa(&p).unwrap();
        assert_eq!(items[0].options.len(), 2);
        assert!(items[1].is_open_ended());
        assert!(items[1].key_doc_ids.is_empty());

        let bad = write(
            dir.path(),
            "bad.jsonl",
            "{\"id\":\"q1\",\"question\":\"?\",\"options\":{\"A\":\"x\",\"B\":\"y\",\"C\":\"z\"},\"gold_answer\":\"D\"}\n",
        );
        assert!(ingest_qa(&bad).unwrap_err().to_string().contains("q1"));
    }

    #[test]
    fn dense_cache_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = Corpus::from_documents((0..20).map(|i| Document::new(format!("d{i}"), "t", format!("body {i} aspirin x{}", i * 7))))
            .unwrap();
        let index = build_dense_index(&corpus, &HashingEmbedder::new(32)).unwrap();
        let p = dir.path().join("idx.jsonl");
        let fp = corpus_fingerprint(&corpus);
        write_dense_index(&p, &index, "hashing", &fp).unwrap();
        let (header, back) = read_dense_index(&p).unwrap();
        assert_eq!(back, index);
        assert_eq!(header.corpus_fingerprint, fp);
        assert_eq!(header.count, 20);
    }

    #[test]
    fn truncated_cache_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "idx.jsonl",
            "{\"format\":\"ctxmap-dense-index\",\"version\":1,\"provider\":\"h\",\"dimension\":2,\"count\":2,\"corpus_fingerprint\":\"0\"}\n{\"id\":\"a\",\"vector\":[1.0,0.0]}\n",
        );
        assert!(matches!(read_dense_index(&p), Err(IoError::BadCache { .. })));
    }
}
