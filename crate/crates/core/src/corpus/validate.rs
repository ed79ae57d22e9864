use std::fmt;

use serde::{Deserialize, Serialize};

use super::{CorpusTable, DistributionStore, EmbeddingMatrix, NeSpanTable, QeTable};
use crate::digest::sha256_hex;

/// Offending ids kept per check; `failed` always holds the full count.
const MAX_OFFENDERS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    /// Blocks bundle construction.
    Hard,
    /// Reported only; affected sentences score as missing.
    Soft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub severity: Severity,
    pub checked: usize,
    pub failed: usize,
    pub offending: Vec<String>,
}

impl CheckResult {
    fn new(name: &str, severity: Severity) -> Self {
        Self {
            name: name.to_owned(),
            severity,
            checked: 0,
            failed: 0,
            offending: Vec::new(),
        }
    }

    fn record(&mut self, ok: bool, id: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok {
            self.failed += 1;
            if self.offending.len() < MAX_OFFENDERS {
                self.offending.push(id());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.failed == 0
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub corpus_records: usize,
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.hard_failures().next().is_none()
    }

    pub fn hard_failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks
            .iter()
            .filter(|c| c.severity == Severity::Hard && !c.passed())
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "corpus records: {}", self.corpus_records)?;
        for c in &self.checks {
            let status = match (c.passed(), c.severity) {
                (true, _) => "ok",
                (false, Severity::Hard) => "FAIL",
                (false, Severity::Soft) => "warn",
            };
            write!(f, "{status:>4}  {:<32} {}/{} failed", c.name, c.failed, c.checked)?;
            if !c.offending.is_empty() {
                write!(f, "  [{}", c.offending.join(", "))?;
                if c.failed > c.offending.len() {
                    write!(f, ", ...")?;
                }
                write!(f, "]")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Unvalidated inputs to [`validate_bundle`].
#[derive(Debug, Clone, Default)]
pub struct BundleParts {
    pub corpus: CorpusTable,
    pub distributions: Option<DistributionStore>,
    pub ner: Option<NeSpanTable>,
    pub embeddings: Option<EmbeddingMatrix>,
    pub qe: Option<QeTable>,
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("bundle validation failed: {}", summarize(.report))]
pub struct ValidationFailed {
    pub report: ValidationReport,
}

fn summarize(report: &ValidationReport) -> String {
    report
        .hard_failures()
        .map(|c| format!("{} ({} failed: {})", c.name, c.failed, c.offending.join(", ")))
        .collect::<Vec<_>>()
        .join("; ")
}

/// A corpus joined with its auxiliary artifacts after every hard consistency
/// check passed. Immutable once built.
#[derive(Debug, Clone)]
pub struct Bundle {
    parts: BundleParts,
    report: ValidationReport,
    digest: String,
}

impl Bundle {
    pub fn corpus(&self) -> &CorpusTable {
        &self.parts.corpus
    }

    pub fn distributions(&self) -> Option<&DistributionStore> {
        self.parts.distributions.as_ref()
    }

    pub fn ner(&self) -> Option<&NeSpanTable> {
        self.parts.ner.as_ref()
    }

    pub fn embeddings(&self) -> Option<&EmbeddingMatrix> {
        self.parts.embeddings.as_ref()
    }

    pub fn qe(&self) -> Option<&QeTable> {
        self.parts.qe.as_ref()
    }

    pub fn vocab_size(&self) -> Option<usize> {
        self.distributions().map(DistributionStore::vocab_size)
    }

    pub fn report(&self) -> &ValidationReport {
        &self.report
    }

    /// SHA-256 over the digests of every constituent artifact.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn into_parts(self) -> BundleParts {
        self.parts
    }
}

fn bundle_digest(parts: &BundleParts) -> String {
    let opt = |d: Option<String>| d.unwrap_or_else(|| "-".to_owned());
    let manifest = format!(
        "corpus {}\ndistributions {}\nner {}\nembeddings {}\nqe {}\n",
        parts.corpus.digest(),
        opt(parts.distributions.as_ref().map(DistributionStore::digest)),
        opt(parts.ner.as_ref().map(NeSpanTable::digest)),
        opt(parts.embeddings.as_ref().map(EmbeddingMatrix::digest)),
        opt(parts.qe.as_ref().map(QeTable::digest)),
    );
    sha256_hex(manifest)
}

/// Cross-check every artifact against the corpus.
///
/// Hard checks: auxiliary ids exist in the corpus, entity spans end within
/// the sentence's token count, QE values lie in `[0, 1]`. Soft checks report
/// coverage gaps and MT token-count disagreements.
pub fn validate_bundle(parts: BundleParts) -> Result<Bundle, ValidationFailed> {
    let report = build_report(&parts);
    if !report.is_ok() {
        return Err(ValidationFailed { report });
    }
    let digest = bundle_digest(&parts);
    Ok(Bundle {
        parts,
        report,
        digest,
    })
}

fn build_report(parts: &BundleParts) -> ValidationReport {
    let corpus = &parts.corpus;
    let mut checks = Vec::new();

    if let Some(dists) = &parts.distributions {
        let mut known = CheckResult::new("distributions.ids_in_corpus", Severity::Hard);
        for s in dists.iter() {
            known.record(corpus.contains(&s.id), || s.id.clone());
        }
        let mut coverage = CheckResult::new("distributions.coverage", Severity::Soft);
        let mut lengths = CheckResult::new("distributions.mt_tokens_length", Severity::Soft);
        for r in corpus.records() {
            let dist = dists.get(&r.id);
            coverage.record(dist.is_some(), || r.id.clone());
            if let (Some(d), Some(tokens)) = (dist, &r.mt_tokens) {
                lengths.record(d.len() == tokens.len(), || r.id.clone());
            }
        }
        checks.extend([known, coverage, lengths]);
    }

    if let Some(ner) = &parts.ner {
        let mut known = CheckResult::new("ner.ids_in_corpus", Severity::Hard);
        let mut bounds = CheckResult::new("ner.bounds", Severity::Hard);
        for id in ner.ids() {
            known.record(corpus.contains(id), || id.to_owned());
            let token_count = parts
                .distributions
                .as_ref()
                .and_then(|d| d.get(id))
                .map(|s| s.len())
                .or_else(|| corpus.get(id).and_then(|r| r.mt_tokens.as_ref()).map(Vec::len));
            if let Some(len) = token_count {
                let max_end = ner.spans(id).iter().map(|s| s.end_token).max().unwrap_or(0);
                bounds.record(max_end <= len, || id.to_owned());
            }
        }
        checks.extend([known, bounds]);
    }

    if let Some(emb) = &parts.embeddings {
        let mut known = CheckResult::new("embeddings.ids_in_corpus", Severity::Hard);
        for id in emb.ids() {
            known.record(corpus.contains(id), || id.clone());
        }
        let mut coverage = CheckResult::new("embeddings.coverage", Severity::Soft);
        for r in corpus.records() {
            coverage.record(emb.position(&r.id).is_some(), || r.id.clone());
        }
        checks.extend([known, coverage]);
    }

    if let Some(qe) = &parts.qe {
        let mut known = CheckResult::new("qe.ids_in_corpus", Severity::Hard);
        let mut range = CheckResult::new("qe.range", Severity::Hard);
        for s in qe.iter() {
            known.record(corpus.contains(&s.id), || s.id.clone());
            range.record((0.0..=1.0).contains(&s.value), || s.id.clone());
        }
        let mut coverage = CheckResult::new("qe.coverage", Severity::Soft);
        for r in corpus.records() {
            coverage.record(qe.get(&r.id).is_some(), || r.id.clone());
        }
        checks.extend([known, range, coverage]);
    }

    ValidationReport {
        corpus_records: corpus.len(),
        checks,
    }
}
