//! Per-sentence measurements for data selection.

mod el2n;
mod entropy;
mod table;

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{default_k, kmeans_fit, ClusterError, Clustering, KMeansConfig};
use crate::corpus::{Bundle, CorpusRecord, CorpusTable, EmbeddingMatrix, QeTable};

pub use el2n::{el2n, step_error};
pub use entropy::{
    avg_entropy, perents, token_entropy, Aggregation, EntropyKernel, LogBase, TAIL_EPSILON,
};
pub use table::{ClusterSummary, Provenance, ScoreEntry, ScoreTable, SCORE_FORMAT};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("vocabulary size {0} is below 2")]
    VocabTooSmall(usize),
    #[error("invalid probability {value} at entry {index}")]
    InvalidProbability { index: usize, value: f64 },
    #[error("distribution has {len} entries for vocabulary size {vocab}")]
    DimensionMismatch { len: usize, vocab: usize },
    #[error("sentence {0:?} has no tokens")]
    EmptySentence(String),
    #[error("sentence {id:?}: entity token index {index} out of bounds for {len} tokens")]
    EntityIndexOutOfBounds { id: String, index: usize, len: usize },
    #[error("sentence {0:?} has no reference token ids")]
    MissingReference(String),
    #[error("sentence {id:?}: reference token id {token_id} >= vocabulary size {vocab}")]
    ReferenceOutOfRange { id: String, token_id: u32, vocab: usize },
    #[error("clustering was fitted on embeddings {found}, not {expected}")]
    DigestMismatch { expected: String, found: String },
    #[error("QE value {value} for {id:?} outside [0, 1]")]
    QeOutOfRange { id: String, value: f64 },
    #[error("{method}: {artifact} required")]
    Capability {
        method: &'static str,
        artifact: &'static str,
    },
    #[error("non-finite score {value} for {id:?}")]
    NonFinite { id: String, value: f64 },
    #[error("duplicate score entry for {0:?}")]
    DuplicateEntry(String),
    #[error("invalid method parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("score table line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}

/// A measurement together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum MdsMethod {
    El2n,
    AvgEntropy,
    Perents {
        #[serde(default)]
        aggregation: Aggregation,
    },
    Selfsup {
        /// `None` selects [`default_k`] of the embedding count.
        k: Option<usize>,
        seed: u64,
        #[serde(default)]
        normalize: bool,
    },
    Qe,
}

impl MdsMethod {
    pub fn name(&self) -> &'static str {
        match self {
            Self::El2n => "el2n",
            Self::AvgEntropy => "avg_entropy",
            Self::Perents { .. } => "perents",
            Self::Selfsup { .. } => "selfsup",
            Self::Qe => "qe",
        }
    }

    /// Segment picked when the caller gives none: the highest-value segment
    /// for the uncertainty measures, the lowest for distance and QE.
    pub fn default_segment(&self, segments: usize) -> usize {
        match self {
            Self::El2n | Self::AvgEntropy | Self::Perents { .. } => segments.saturating_sub(1),
            Self::Selfsup { .. } | Self::Qe => 0,
        }
    }

    /// Parse a method name with default parameters.
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "el2n" => Self::El2n,
            "avg_entropy" => Self::AvgEntropy,
            "perents" => Self::Perents {
                aggregation: Aggregation::Max,
            },
            "selfsup" => Self::Selfsup {
                k: None,
                seed: 0,
                normalize: false,
            },
            "qe" => Self::Qe,
            _ => return None,
        })
    }
}

/// Distances of every embedding row to its assigned centroid, in row order.
pub fn selfsup_scores(emb: &EmbeddingMatrix, clustering: &Clustering) -> Result<Vec<f64>, MetricsError> {
    let digest = emb.digest();
    if digest != clustering.input_digest {
        return Err(MetricsError::DigestMismatch {
            expected: digest,
            found: clustering.input_digest.clone(),
        });
    }
    if clustering.assignments.len() != emb.rows() {
        return Err(MetricsError::InvalidParams(format!(
            "clustering covers {} rows, matrix has {}",
            clustering.assignments.len(),
            emb.rows()
        )));
    }
    Ok((0..emb.rows())
        .into_par_iter()
        .map(|i| {
            let c = clustering.centroids.row(clustering.assignments[i] as usize);
            emb.row(i)
                .iter()
                .zip(c)
                .map(|(&x, &c)| (f64::from(x) - c).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect())
}

/// QE values keyed to corpus order; ids without a value are missing.
pub fn qe_passthrough(corpus: &CorpusTable, qe: &QeTable) -> Result<ScoreTable, MetricsError> {
    let entries = qe_entries(corpus, qe)?;
    ScoreTable::new(MdsMethod::Qe, entries, Provenance::detached(&MdsMethod::Qe))
}

fn qe_entries(corpus: &CorpusTable, qe: &QeTable) -> Result<Vec<ScoreEntry>, MetricsError> {
    if let Some(bad) = qe.iter().find(|s| !(0.0..=1.0).contains(&s.value)) {
        return Err(MetricsError::QeOutOfRange {
            id: bad.id.clone(),
            value: bad.value,
        });
    }
    Ok(corpus
        .records()
        .iter()
        .map(|r| ScoreEntry::new(&r.id, qe.get(&r.id)))
        .collect())
}

fn per_sentence<F>(corpus: &CorpusTable, f: F) -> Result<Vec<ScoreEntry>, MetricsError>
where
    F: Fn(&CorpusRecord) -> Result<Option<f64>, MetricsError> + Sync,
{
    corpus
        .records()
        .par_iter()
        .map(|r| Ok(ScoreEntry::new(&r.id, f(r)?)))
        .collect()
}

/// Score every corpus sentence with `method`.
///
/// Sentences lacking the artifact a method needs (no distributions, no
/// entity tokens, no embedding, no QE value) are recorded as missing.
/// Sentences are evaluated in parallel; the result is keyed and ordered by
/// corpus position and independent of scheduling.
pub fn score_corpus(bundle: &Bundle, method: MdsMethod) -> Result<ScoreTable, MetricsError> {
    score_corpus_with(bundle, method, EntropyKernel::NATURAL)
}

/// [`score_corpus`] with an explicit entropy kernel.
pub fn score_corpus_with(
    bundle: &Bundle,
    method: MdsMethod,
    kernel: EntropyKernel,
) -> Result<ScoreTable, MetricsError> {
    let corpus = bundle.corpus();
    let mut provenance = Provenance::for_bundle(bundle.digest(), &method, kernel.base);
    let need = |artifact| MetricsError::Capability {
        method: method.name(),
        artifact,
    };
    let entries = match method {
        MdsMethod::AvgEntropy => {
            let dists = bundle.distributions().ok_or_else(|| need("distributions"))?;
            let vocab = dists.vocab_size();
            per_sentence(corpus, |r| {
                dists
                    .get(&r.id)
                    .map(|s| kernel.average(s, vocab))
                    .transpose()
            })?
        }
        MdsMethod::Perents { aggregation } => {
            let dists = bundle.distributions().ok_or_else(|| need("distributions"))?;
            let ner = bundle.ner().ok_or_else(|| need("ner"))?;
            let vocab = dists.vocab_size();
            per_sentence(corpus, |r| {
                let Some(s) = dists.get(&r.id) else {
                    return Ok(None);
                };
                let entity_tokens: BTreeSet<usize> = ner.token_indices(&r.id);
                kernel.perents(s, &entity_tokens, aggregation, vocab)
            })?
        }
        MdsMethod::El2n => {
            let dists = bundle.distributions().ok_or_else(|| need("distributions"))?;
            if !dists.is_empty() && !dists.has_references() {
                return Err(need("reference token ids"));
            }
            let vocab = dists.vocab_size();
            per_sentence(corpus, |r| dists.get(&r.id).map(|s| el2n(s, vocab)).transpose())?
        }
        MdsMethod::Selfsup { k, seed, normalize } => {
            let emb = bundle.embeddings().ok_or_else(|| need("embeddings"))?;
            if corpus.is_empty() {
                Vec::new()
            } else {
                let normalized;
                let matrix = if normalize {
                    normalized = emb.normalized();
                    &normalized
                } else {
                    emb
                };
                let k = match k {
                    Some(0) => return Err(MetricsError::InvalidParams("k must be at least 1".into())),
                    Some(k) => k,
                    None => default_k(matrix.rows()),
                };
                let config = KMeansConfig::new(k, seed);
                let clustering = kmeans_fit(matrix, &config)?;
                let distances = selfsup_scores(matrix, &clustering)?;
                provenance.clustering = Some(ClusterSummary::new(&clustering, &config, normalize));
                corpus
                    .records()
                    .iter()
                    .map(|r| ScoreEntry::new(&r.id, matrix.position(&r.id).map(|i| distances[i])))
                    .collect()
            }
        }
        MdsMethod::Qe => {
            let qe = bundle.qe().ok_or_else(|| need("qe"))?;
            qe_entries(corpus, qe)?
        }
    };
    ScoreTable::new(method, entries, provenance)
}
