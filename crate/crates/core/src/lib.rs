//! Corpus selection for domain-specific machine-translation fine-tuning.
//!
//! The crate scores every sentence of a parallel corpus with a
//! *measurement for data selection* (MDS), ranks the corpus by that value,
//! splits the ranking into contiguous segments and draws seeded,
//! reproducible training subsets from a segment. It also ships corpus-level
//! BLEU and ChrF++ so that the fine-tuned systems can be compared per
//! segment.
//!
//! Supported measurements:
//!
//! * `el2n`: mean Euclidean distance between one-hot reference tokens and
//!   the predicted token distributions (needs references).
//! * `avg_entropy`: mean per-token vocabulary entropy of the decoded MT.
//! * `perents`: maximum (or mean) entropy over the named-entity tokens of
//!   the MT.
//! * `selfsup`: distance of a source-sentence embedding to its k-means
//!   centroid.
//! * `qe`: externally computed reference-free quality estimates.
//!
//! Model inference is not part of this crate. Token distributions, entity
//! spans, embeddings and QE values are read from the interchange formats in
//! [`corpus`].

pub mod cluster;
pub mod corpus;
pub mod digest;
pub mod eval;
pub mod metrics;
pub mod rng;
pub mod selection;
pub mod synth;

pub use cluster::{assign, kmeans_fit, kmeans_pp_init, Centroids, ClusterError, Clustering, KMeansConfig};
pub use corpus::{
    validate_bundle, Bundle, BundleParts, CorpusError, CorpusRecord, CorpusTable, DecodeMode,
    DistributionStore, EmbeddingMatrix, NeSpan, NeSpanTable, QeScore, QeTable, SentenceDistributions,
    StorageMode, TokenDistribution, ValidationFailed, ValidationReport,
};
pub use eval::{chrf_pp, corpus_bleu, EvalError, EvalReport};
pub use metrics::{
    avg_entropy, el2n, perents, qe_passthrough, score_corpus, selfsup_scores, token_entropy,
    Aggregation, LogBase, MdsMethod, MetricsError, ScoreTable,
};
pub use rng::{ManifestRng, PRNG_ID};
pub use synth::{synth_bundle, write_bundle, BundlePaths, SynthConfig};
pub use selection::{
    rank, sample, segment, select, select_all_segments, Direction, MissingPolicy, SelectionConfig, SelectionError,
    SelectionManifest,
};

/// Version string written into every artifact.
pub const TOOL_VERSION: &str = concat!("mds ", env!("CARGO_PKG_VERSION"));
