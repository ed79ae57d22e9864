//! Seeded synthetic bundles for tests, benchmarks and demos.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::corpus::{
    BundleParts, CorpusRecord, CorpusTable, DecodeMode, DistributionStore, EmbeddingMatrix, NeSpan,
    NeSpanTable, QeScore, QeTable, SentenceDistributions, StorageMode, TokenDistribution,
};
use crate::rng::ManifestRng;

const WORDS: &[&str] = &[
    "the", "patient", "received", "dose", "of", "aspirin", "in", "Berlin", "after", "surgery",
    "clinic", "report", "Maria", "shows", "no", "sign", "infection", "and", "ward", "Pfizer",
];
const LABELS: &[&str] = &["PER", "LOC", "ORG", "MISC"];

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub sentences: usize,
    pub vocab: u32,
    pub max_len: usize,
    pub dim: usize,
    pub mode: StorageMode,
    /// Listed entries per sparse row.
    pub sparse_k: usize,
    /// Probability that a sentence gets at least one entity span.
    pub entity_rate: f64,
    /// Probability that a sentence is left out of the QE table.
    pub qe_gap_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sentences: 100,
            vocab: 64,
            max_len: 20,
            dim: 8,
            mode: StorageMode::Dense,
            sparse_k: 8,
            entity_rate: 0.6,
            qe_gap_rate: 0.05,
            seed: 0,
        }
    }
}

fn peaked_row(rng: &mut ManifestRng, len: usize) -> Vec<f64> {
    let sharpness = 1.0 + 8.0 * rng.unit_f64();
    let mut w: Vec<f64> = (0..len).map(|_| rng.unit_f64().powf(sharpness) + 1e-6).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

fn random_distribution(rng: &mut ManifestRng, cfg: &SynthConfig) -> TokenDistribution {
    let vocab = cfg.vocab as usize;
    match cfg.mode {
        StorageMode::Dense => {
            TokenDistribution::Dense(peaked_row(rng, vocab).into_iter().map(|p| p as f32).collect())
        }
        StorageMode::Sparse => {
            let k = cfg.sparse_k.min(vocab);
            let mut pool: Vec<u32> = (0..cfg.vocab).collect();
            for i in 0..k {
                let j = i + rng.index(vocab - i);
                pool.swap(i, j);
            }
            let mut indices = pool[..k].to_vec();
            indices.sort_unstable();
            let tail = if k < vocab { 0.2 * rng.unit_f64() } else { 0.0 };
            let probs = peaked_row(rng, k).into_iter().map(|p| (p * (1.0 - tail)) as f32).collect();
            TokenDistribution::Sparse {
                indices,
                probs,
                tail_mass: tail as f32,
            }
        }
    }
}

/// Generate a complete, valid bundle (distributions with reference ids,
/// entity spans, embeddings and QE values) from a seed.
pub fn synth_bundle(cfg: &SynthConfig) -> BundleParts {
    let mut rng = ManifestRng::new(cfg.seed);
    let mut records = Vec::with_capacity(cfg.sentences);
    let mut store = DistributionStore::new(cfg.vocab, cfg.mode).with_decode_mode(DecodeMode::TeacherForced);
    let mut spans = Vec::new();
    let mut rows = Vec::with_capacity(cfg.sentences);
    let mut qe = Vec::new();
    let centers: Vec<Vec<f32>> = (0..4)
        .map(|_| (0..cfg.dim).map(|_| (rng.unit_f64() * 10.0 - 5.0) as f32).collect())
        .collect();

    for i in 0..cfg.sentences {
        let id = format!("s{i:06}");
        let len = 1 + rng.index(cfg.max_len.max(1));
        let tokens: Vec<String> = (0..len).map(|_| WORDS[rng.index(WORDS.len())].to_owned()).collect();
        let src: Vec<&str> = (0..len).map(|_| WORDS[rng.index(WORDS.len())]).collect();
        let tgt_len = (len as i64 + rng.index(3) as i64 - 1).max(1) as usize;
        let refs: Vec<u32> = (0..tgt_len).map(|_| rng.below(u64::from(cfg.vocab)) as u32).collect();
        records.push(CorpusRecord {
            id: id.clone(),
            src: src.join(" "),
            tgt: Some(tokens[..tgt_len.min(len)].join(" ")),
            mt: tokens.join(" "),
            mt_tokens: Some(tokens),
        });

        let dists = (0..len).map(|_| random_distribution(&mut rng, cfg)).collect();
        store
            .push(SentenceDistributions::new(id.clone(), dists).with_references(refs))
            .expect("synthetic distributions are valid");

        if rng.unit_f64() < cfg.entity_rate {
            for _ in 0..1 + rng.index(2) {
                let start = rng.index(len);
                let end = start + 1 + rng.index((len - start).min(3));
                spans.push(NeSpan {
                    id: id.clone(),
                    start_token: start,
                    end_token: end,
                    label: LABELS[rng.index(LABELS.len())].to_owned(),
                    score: 0.5 + 0.5 * rng.unit_f64(),
                });
            }
        }

        let c = &centers[rng.index(centers.len())];
        let row = c.iter().map(|x| x + (rng.unit_f64() - 0.5) as f32).collect();
        rows.push((id.clone(), row));

        if rng.unit_f64() >= cfg.qe_gap_rate {
            qe.push(QeScore {
                id,
                value: rng.unit_f64(),
            });
        }
    }

    BundleParts {
        corpus: CorpusTable::from_records(records).expect("unique ids"),
        distributions: Some(store),
        ner: Some(NeSpanTable::from_spans(spans).expect("spans are well formed")),
        embeddings: Some(EmbeddingMatrix::from_rows(rows).expect("rows share a dimension")),
        qe: Some(QeTable::from_scores(qe).expect("unique ids")),
    }
}

/// Paths of a bundle written by [`write_bundle`].
#[derive(Debug, Clone)]
pub struct BundlePaths {
    pub corpus: PathBuf,
    pub distributions: PathBuf,
    pub ner: PathBuf,
    pub embeddings: PathBuf,
    pub qe: PathBuf,
}

/// Write every present artifact of `parts` into `dir` under fixed names.
pub fn write_bundle(parts: &BundleParts, dir: impl AsRef<Path>) -> io::Result<BundlePaths> {
    let dir = dir.as_ref();
    let paths = BundlePaths {
        corpus: dir.join("corpus.jsonl"),
        distributions: dir.join("dists.mdsd"),
        ner: dir.join("ner.jsonl"),
        embeddings: dir.join("emb.mdse"),
        qe: dir.join("qe.jsonl"),
    };
    fs::write(&paths.corpus, parts.corpus.to_jsonl())?;
    if let Some(d) = &parts.distributions {
        fs::write(&paths.distributions, d.to_bytes())?;
    }
    if let Some(n) = &parts.ner {
        fs::write(&paths.ner, n.to_jsonl())?;
    }
    if let Some(e) = &parts.embeddings {
        fs::write(&paths.embeddings, e.to_bytes())?;
    }
    if let Some(q) = &parts.qe {
        fs::write(&paths.qe, q.to_jsonl())?;
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::validate_bundle;

    #[test]
    fn bundles_validate_and_are_seeded() {
        for mode in [StorageMode::Dense, StorageMode::Sparse] {
            let cfg = SynthConfig {
                sentences: 50,
                mode,
                seed: 3,
                ..Default::default()
            };
            let a = validate_bundle(synth_bundle(&cfg)).unwrap();
            let b = validate_bundle(synth_bundle(&cfg)).unwrap();
            assert_eq!(a.digest(), b.digest());
            let c = validate_bundle(synth_bundle(&SynthConfig { seed: 4, ..cfg })).unwrap();
            assert_ne!(a.digest(), c.digest());
        }
    }

    #[test]
    fn written_bundle_reloads() {
        let parts = synth_bundle(&SynthConfig {
            sentences: 10,
            ..Default::default()
        });
        let dir = tempfile::tempdir().unwrap();
        let paths = write_bundle(&parts, dir.path()).unwrap();
        let store = crate::corpus::load_distributions(&paths.distributions).unwrap();
        assert_eq!(Some(&store), parts.distributions.as_ref());
        let corpus = crate::corpus::load_corpus(&paths.corpus).unwrap();
        assert_eq!(corpus.digest(), parts.corpus.digest());
    }
}
