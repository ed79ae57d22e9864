//! Score tables and their JSON Lines form.
//!
//! The first line is a header object carrying the method and provenance;
//! every following line is `{"id", "method", "value", "params"}` where
//! `value` is `null` for a missing score and `params` is the parameter
//! digest from the header.

use std::borrow::Cow;
use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LogBase, MdsMethod, MetricsError};
use crate::cluster::{Clustering, KMeansConfig};
use crate::digest::sha256_hex;
use crate::rng::PRNG_ID;
use crate::TOOL_VERSION;

pub const SCORE_FORMAT: &str = "mds-scores/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub k: usize,
    pub seed: u64,
    pub prng: String,
    pub normalize: bool,
    pub max_iter: usize,
    pub tol: f64,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    pub embedding_digest: String,
}

impl ClusterSummary {
    pub fn new(fit: &Clustering, config: &KMeansConfig, normalize: bool) -> Self {
        Self {
            k: fit.k,
            seed: fit.seed,
            prng: PRNG_ID.to_owned(),
            normalize,
            max_iter: config.max_iter,
            tol: config.tol,
            iterations: fit.iterations,
            converged: fit.converged,
            objective: fit.objective,
            embedding_digest: fit.input_digest.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub bundle_digest: String,
    /// Short digest of method parameters, bundle digest and log base.
    pub params_digest: String,
    pub log_base: LogBase,
    pub tool_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clustering: Option<ClusterSummary>,
}

impl Provenance {
    pub fn for_bundle(bundle_digest: &str, method: &MdsMethod, log_base: LogBase) -> Self {
        let params = serde_json::to_string(method).expect("method serializes");
        let params_digest = sha256_hex(format!("{params}|{bundle_digest}|{}", log_base.name()))[..16].to_owned();
        Self {
            bundle_digest: bundle_digest.to_owned(),
            params_digest,
            log_base,
            tool_version: TOOL_VERSION.to_owned(),
            clustering: None,
        }
    }

    /// Provenance for tables built outside a [`crate::corpus::Bundle`].
    pub fn detached(method: &MdsMethod) -> Self {
        Self::for_bundle("none", method, LogBase::Natural)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub id: String,
    pub value: Option<f64>,
}

impl ScoreEntry {
    pub fn new(id: &str, value: Option<f64>) -> Self {
        Self {
            id: id.to_owned(),
            value,
        }
    }
}

/// One value (or an explicit missing marker) per corpus sentence, in corpus
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub method: MdsMethod,
    pub entries: Vec<ScoreEntry>,
    pub provenance: Provenance,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    method: MdsMethod,
    provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct Line<'a> {
    #[serde(borrow)]
    id: Cow<'a, str>,
    #[serde(borrow)]
    method: Cow<'a, str>,
    value: Option<f64>,
    #[serde(borrow)]
    params: Cow<'a, str>,
}

impl ScoreTable {
    pub fn new(
        method: MdsMethod,
        entries: Vec<ScoreEntry>,
        provenance: Provenance,
    ) -> Result<Self, MetricsError> {
        let mut index = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if let Some(v) = e.value.filter(|v| !v.is_finite()) {
                return Err(MetricsError::NonFinite {
                    id: e.id.clone(),
                    value: v,
                });
            }
            if index.insert(e.id.clone(), i).is_some() {
                return Err(MetricsError::DuplicateEntry(e.id.clone()));
            }
        }
        Ok(Self {
            method,
            entries,
            provenance,
            index,
        })
    }

    /// Build a detached table from `(id, value)` pairs.
    pub fn from_values<S: AsRef<str>>(
        method: MdsMethod,
        values: impl IntoIterator<Item = (S, Option<f64>)>,
    ) -> Result<Self, MetricsError> {
        let entries = values
            .into_iter()
            .map(|(id, v)| ScoreEntry::new(id.as_ref(), v))
            .collect();
        Self::new(method, entries, Provenance::detached(&method))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Score for `id`; `None` when missing or unknown.
    pub fn value(&self, id: &str) -> Option<f64> {
        self.index.get(id).and_then(|&i| self.entries[i].value)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn missing_ids(&self) -> impl Iterator<Item = &str> {
        self.entries
            .iter()
            .filter(|e| e.value.is_none())
            .map(|e| e.id.as_str())
    }

    pub fn scored_count(&self) -> usize {
        self.entries.iter().filter(|e| e.value.is_some()).count()
    }

    pub fn to_jsonl(&self) -> String {
        let header = Header {
            format: SCORE_FORMAT.to_owned(),
            method: self.method,
            provenance: self.provenance.clone(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        let name = self.method.name();
        for e in &self.entries {
            let line = Line {
                id: Cow::Borrowed(&e.id),
                method: Cow::Borrowed(name),
                value: e.value,
                params: Cow::Borrowed(&self.provenance.params_digest),
            };
            out.push_str(&serde_json::to_string(&line).expect("entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.to_jsonl())
    }

    pub fn parse(text: &str) -> Result<Self, MetricsError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let bad = |line: usize, message: String| MetricsError::Format { line, message };
        let (hl, header_text) = lines.next().ok_or_else(|| bad(1, "missing header".into()))?;
        let header: Header = serde_json::from_str(header_text).map_err(|e| bad(hl, e.to_string()))?;
        if header.format != SCORE_FORMAT {
            return Err(bad(hl, format!("unsupported format {:?}", header.format)));
        }
        let name = header.method.name();
        let mut entries = Vec::new();
        for (ln, raw) in lines {
            let line: Line<'_> = serde_json::from_str(raw).map_err(|e| bad(ln, e.to_string()))?;
            if line.method != name {
                return Err(bad(ln, format!("method {:?} does not match header {name:?}", line.method)));
            }
            if line.params != header.provenance.params_digest {
                return Err(bad(ln, "params digest does not match header".into()));
            }
            entries.push(ScoreEntry::new(&line.id, line.value));
        }
        Self::new(header.method, entries, header.provenance)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MetricsError> {
        let path = path.as_ref();
        fs::write(path, self.to_jsonl()).map_err(|source| MetricsError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MetricsError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| MetricsError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }
}
