//! Interchange formats and the validated [`Bundle`].
//!
//! Text artifacts are UTF-8 JSON Lines, one object per line:
//!
//! * corpus: `{"id", "src", "tgt"?, "mt", "mt_tokens"?}`
//! * entity spans: `{"id", "start_token", "end_token", "label", "score"}`,
//!   token indices into the MT token sequence, end exclusive
//! * QE: `{"id", "value"}`
//!
//! Binary artifacts are described in [`dist`] (MDSD1) and [`embed`] (MDSE).
//! Blank lines are ignored in every text format.

pub mod dist;
pub mod embed;
mod validate;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dist::{
    DecodeMode, DistributionStore, DistributionViolation, Probability, SentenceDistributions,
    StorageMode, TokenDistribution,
};
pub use embed::EmbeddingMatrix;
pub use validate::{
    validate_bundle, Bundle, BundleParts, CheckResult, Severity, ValidationFailed, ValidationReport,
};

use crate::digest::DigestWriter;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("line {line}: missing required field `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("empty id{}", line.map(|l| format!(" on line {l}")).unwrap_or_default())]
    EmptyId { line: Option<usize> },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("bad magic bytes, expected {expected:?}")]
    BadMagic { expected: &'static str },
    #[error("unsupported {format} version {version}")]
    UnsupportedVersion { format: &'static str, version: u8 },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("truncated {format} record at byte offset {offset}")]
    Truncated { format: &'static str, offset: usize },
    #[error("trailing bytes after last {format} record")]
    TrailingBytes { format: &'static str },
    #[error("invalid UTF-8 id in {format} at byte offset {offset}")]
    InvalidUtf8 { format: &'static str, offset: usize },
    #[error("sentence {id:?} token {token}: {violation}")]
    InvalidDistribution {
        id: String,
        token: usize,
        violation: DistributionViolation,
    },
    #[error("sentence {id:?} token {token}: row type does not match the store's storage mode")]
    ModeMismatch { id: String, token: usize },
    #[error("sentence {0:?} has no tokens")]
    EmptySentence(String),
    #[error("sentence {id:?}: reference token id {token_id} >= vocabulary size {vocab}")]
    ReferenceOutOfRange { id: String, token_id: u32, vocab: usize },
    #[error("line {line}: invalid span [{start}, {end}) for {id:?}: {reason}")]
    InvalidSpan {
        line: usize,
        id: String,
        start: i64,
        end: i64,
        reason: &'static str,
    },
    #[error("line {line}: entity score {score} outside [0, 1]")]
    SpanScore { line: usize, score: f64 },
    #[error("embedding header declares {expected} rows, payload holds {found}")]
    RowCountMismatch { expected: usize, found: usize },
    #[error("non-finite embedding value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn header(msg: impl Into<String>) -> Self {
        Self::Header(msg.into())
    }
}

fn read_text(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))
}

/// Non-blank lines with 1-based line numbers.
fn json_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_line<'de, T: Deserialize<'de>>(line_no: usize, line: &'de str) -> Result<T, CorpusError> {
    serde_json::from_str(line).map_err(|e| CorpusError::MalformedLine {
        line: line_no,
        message: e.to_string(),
    })
}

/// One parallel-corpus entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub src: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tgt: Option<String>,
    pub mt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mt_tokens: Option<Vec<String>>,
}

#[derive(Deserialize)]
struct RawRecord {
    id: Option<String>,
    src: Option<String>,
    tgt: Option<String>,
    mt: Option<String>,
    mt_tokens: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusTable {
    records: Vec<CorpusRecord>,
    index: HashMap<String, usize>,
}

impl CorpusTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: impl IntoIterator<Item = CorpusRecord>) -> Result<Self, CorpusError> {
        let mut table = Self::new();
        for r in records {
            table.push(r)?;
        }
        Ok(table)
    }

    pub fn push(&mut self, record: CorpusRecord) -> Result<(), CorpusError> {
        if record.id.is_empty() {
            return Err(CorpusError::EmptyId { line: None });
        }
        if self.index.contains_key(&record.id) {
            return Err(CorpusError::DuplicateId(record.id));
        }
        self.index.insert(record.id.clone(), self.records.len());
        self.records.push(record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[CorpusRecord] {
        &self.records
    }

    pub fn get(&self, id: &str) -> Option<&CorpusRecord> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Position of `id` in file order.
    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut table = Self::new();
        for (line, raw) in json_lines(text) {
            let r: RawRecord = parse_line(line, raw)?;
            let id = r.id.ok_or(CorpusError::MissingField { line, field: "id" })?;
            if id.is_empty() {
                return Err(CorpusError::EmptyId { line: Some(line) });
            }
            let record = CorpusRecord {
                id,
                src: r.src.ok_or(CorpusError::MissingField { line, field: "src" })?,
                tgt: r.tgt,
                mt: r.mt.ok_or(CorpusError::MissingField { line, field: "mt" })?,
                mt_tokens: r.mt_tokens,
            };
            table.push(record)?;
        }
        Ok(table)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn digest(&self) -> String {
        crate::digest::sha256_hex(self.to_jsonl())
    }
}

/// Load a JSON Lines corpus, preserving file order.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<CorpusTable, CorpusError> {
    CorpusTable::parse(&read_text(path.as_ref())?)
}

/// A named-entity span over MT token indices, `[start_token, end_token)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeSpan {
    pub id: String,
    pub start_token: usize,
    pub end_token: usize,
    pub label: String,
    pub score: f64,
}

#[derive(Deserialize)]
struct RawSpan {
    id: Option<String>,
    start_token: Option<i64>,
    end_token: Option<i64>,
    label: Option<String>,
    score: Option<f64>,
}

/// Entity spans grouped by sentence id, each group sorted by start token.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NeSpanTable {
    spans: BTreeMap<String, Vec<NeSpan>>,
}

impl NeSpanTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_spans(spans: impl IntoIterator<Item = NeSpan>) -> Result<Self, CorpusError> {
        let mut table = Self::new();
        for span in spans {
            if span.id.is_empty() {
                return Err(CorpusError::EmptyId { line: None });
            }
            if span.start_token >= span.end_token {
                return Err(CorpusError::InvalidSpan {
                    line: 0,
                    id: span.id,
                    start: span.start_token as i64,
                    end: span.end_token as i64,
                    reason: if span.start_token == span.end_token { "empty span" } else { "inverted span" },
                });
            }
            table.spans.entry(span.id.clone()).or_default().push(span);
        }
        table.sort();
        Ok(table)
    }

    fn sort(&mut self) {
        for group in self.spans.values_mut() {
            group.sort_by_key(|s| (s.start_token, s.end_token));
        }
    }

    pub fn spans(&self, id: &str) -> &[NeSpan] {
        self.spans.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Every token index covered by at least one span of `id`.
    pub fn token_indices(&self, id: &str) -> BTreeSet<usize> {
        self.spans(id)
            .iter()
            .flat_map(|s| s.start_token..s.end_token)
            .collect()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.spans.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = &NeSpan> {
        self.spans.values().flatten()
    }

    pub fn span_count(&self) -> usize {
        self.spans.values().map(Vec::len).sum()
    }

    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut table = Self::new();
        for (line, raw) in json_lines(text) {
            let r: RawSpan = parse_line(line, raw)?;
            let id = r.id.ok_or(CorpusError::MissingField { line, field: "id" })?;
            if id.is_empty() {
                return Err(CorpusError::EmptyId { line: Some(line) });
            }
            let start = r
                .start_token
                .ok_or(CorpusError::MissingField { line, field: "start_token" })?;
            let end = r
                .end_token
                .ok_or(CorpusError::MissingField { line, field: "end_token" })?;
            let reason = if start < 0 || end < 0 {
                Some("negative token index")
            } else if start == end {
                Some("empty span")
            } else if start > end {
                Some("inverted span")
            } else {
                None
            };
            if let Some(reason) = reason {
                return Err(CorpusError::InvalidSpan {
                    line,
                    id,
                    start,
                    end,
                    reason,
                });
            }
            let score = r.score.ok_or(CorpusError::MissingField { line, field: "score" })?;
            if !(0.0..=1.0).contains(&score) {
                return Err(CorpusError::SpanScore { line, score });
            }
            let span = NeSpan {
                id: id.clone(),
                start_token: start as usize,
                end_token: end as usize,
                label: r.label.ok_or(CorpusError::MissingField { line, field: "label" })?,
                score,
            };
            table.spans.entry(id).or_default().push(span);
        }
        table.sort();
        Ok(table)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in self.iter() {
            out.push_str(&serde_json::to_string(s).expect("span serializes"));
            out.push('\n');
        }
        out
    }

    pub fn digest(&self) -> String {
        crate::digest::sha256_hex(self.to_jsonl())
    }
}

/// Load entity spans. Ids are not checked against a corpus here; that is
/// [`validate_bundle`]'s job.
pub fn load_ner_spans(path: impl AsRef<Path>) -> Result<NeSpanTable, CorpusError> {
    NeSpanTable::parse(&read_text(path.as_ref())?)
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix, CorpusError> {
    EmbeddingMatrix::load(path)
}

pub fn load_distributions(path: impl AsRef<Path>) -> Result<DistributionStore, CorpusError> {
    DistributionStore::load(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QeScore {
    pub id: String,
    pub value: f64,
}

/// Reference-free quality estimates in file order. Range checks happen in
/// [`validate_bundle`] so that a bad value is reported alongside every other
/// consistency failure.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QeTable {
    scores: Vec<QeScore>,
    index: HashMap<String, usize>,
}

impl QeTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_scores(scores: impl IntoIterator<Item = QeScore>) -> Result<Self, CorpusError> {
        let mut table = Self::new();
        for s in scores {
            table.push(s)?;
        }
        Ok(table)
    }

    pub fn push(&mut self, score: QeScore) -> Result<(), CorpusError> {
        if score.id.is_empty() {
            return Err(CorpusError::EmptyId { line: None });
        }
        if self.index.contains_key(&score.id) {
            return Err(CorpusError::DuplicateId(score.id));
        }
        self.index.insert(score.id.clone(), self.scores.len());
        self.scores.push(score);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.index.get(id).map(|&i| self.scores[i].value)
    }

    pub fn iter(&self) -> impl Iterator<Item = &QeScore> {
        self.scores.iter()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        #[derive(Deserialize)]
        struct Raw {
            id: Option<String>,
            value: Option<f64>,
        }
        let mut table = Self::new();
        for (line, raw) in json_lines(text) {
            let r: Raw = parse_line(line, raw)?;
            let id = r.id.ok_or(CorpusError::MissingField { line, field: "id" })?;
            if id.is_empty() {
                return Err(CorpusError::EmptyId { line: Some(line) });
            }
            let value = r.value.ok_or(CorpusError::MissingField { line, field: "value" })?;
            table.push(QeScore { id, value })?;
        }
        Ok(table)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.scores {
            out.push_str(&serde_json::to_string(s).expect("qe serializes"));
            out.push('\n');
        }
        out
    }

    pub fn digest(&self) -> String {
        let mut w = DigestWriter::new();
        w.update(self.to_jsonl());
        w.finish_hex()
    }
}

pub fn load_qe(path: impl AsRef<Path>) -> Result<QeTable, CorpusError> {
    QeTable::parse(&read_text(path.as_ref())?)
}
