//! Vocabulary entropy of decode steps and the sentence scores built on it.
//!
//! Entropy here is the full-vocabulary entropy scaled by `1/V`. For a fixed
//! vocabulary the scale is a positive constant, so it never changes a
//! ranking; it only keeps values comparable with published numbers.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::corpus::{Probability, SentenceDistributions, TokenDistribution};

/// Tail masses at or below this contribute nothing.
pub const TAIL_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogBase {
    #[default]
    Natural,
    Two,
}

impl LogBase {
    fn log(self, x: f64) -> f64 {
        match self {
            Self::Natural => x.ln(),
            Self::Two => x.log2(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Natural => "e",
            Self::Two => "2",
        }
    }
}

/// How PerEnts folds the entropies of a sentence's entity tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Max,
    Mean,
}

impl Aggregation {
    /// `None` for an empty input.
    pub fn fold(self, values: impl IntoIterator<Item = f64>) -> Option<f64> {
        let mut count = 0usize;
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for v in values {
            count += 1;
            max = max.max(v);
            sum += v;
        }
        match (count, self) {
            (0, _) => None,
            (_, Self::Max) => Some(max),
            (n, Self::Mean) => Some(sum / n as f64),
        }
    }
}

/// Entropy computations in a fixed logarithm base.
#[derive(Debug, Clone, Copy, Default)]
pub struct EntropyKernel {
    pub base: LogBase,
}

impl EntropyKernel {
    pub const NATURAL: Self = Self {
        base: LogBase::Natural,
    };

    pub fn new(base: LogBase) -> Self {
        Self { base }
    }

    fn term(self, p: f64) -> f64 {
        if p > 0.0 {
            -p * self.base.log(p)
        } else {
            0.0
        }
    }

    pub fn token<P: Probability>(
        self,
        dist: &TokenDistribution<P>,
        vocab: usize,
    ) -> Result<f64, MetricsError> {
        if vocab < 2 {
            return Err(MetricsError::VocabTooSmall(vocab));
        }
        let check = |i: usize, p: f64| {
            if p < 0.0 || !p.is_finite() {
                Err(MetricsError::InvalidProbability { index: i, value: p })
            } else {
                Ok(p)
            }
        };
        let sum = match dist {
            TokenDistribution::Dense(probs) => {
                if probs.len() != vocab {
                    return Err(MetricsError::DimensionMismatch {
                        len: probs.len(),
                        vocab,
                    });
                }
                let mut acc = 0.0;
                for (i, &p) in probs.iter().enumerate() {
                    acc += self.term(check(i, p.into())?);
                }
                acc
            }
            TokenDistribution::Sparse {
                indices,
                probs,
                tail_mass,
            } => {
                if indices.len() > vocab {
                    return Err(MetricsError::DimensionMismatch {
                        len: indices.len(),
                        vocab,
                    });
                }
                let mut acc = 0.0;
                for (i, &p) in probs.iter().enumerate() {
                    acc += self.term(check(i, p.into())?);
                }
                let tail = check(probs.len(), (*tail_mass).into())?;
                let unlisted = vocab - indices.len();
                if tail > TAIL_EPSILON && unlisted > 0 {
                    acc -= tail * self.base.log(tail / unlisted as f64);
                }
                acc
            }
        };
        Ok(sum / vocab as f64)
    }

    pub fn average<P: Probability>(
        self,
        sentence: &SentenceDistributions<P>,
        vocab: usize,
    ) -> Result<f64, MetricsError> {
        if sentence.is_empty() {
            return Err(MetricsError::EmptySentence(sentence.id.clone()));
        }
        let mut acc = 0.0;
        for d in &sentence.tokens {
            acc += self.token(d, vocab)?;
        }
        Ok(acc / sentence.len() as f64)
    }

    /// `None` when `entity_tokens` is empty.
    pub fn perents<P: Probability>(
        self,
        sentence: &SentenceDistributions<P>,
        entity_tokens: &BTreeSet<usize>,
        aggregation: Aggregation,
        vocab: usize,
    ) -> Result<Option<f64>, MetricsError> {
        if let Some(&index) = entity_tokens.iter().next_back().filter(|&&i| i >= sentence.len()) {
            return Err(MetricsError::EntityIndexOutOfBounds {
                id: sentence.id.clone(),
                index,
                len: sentence.len(),
            });
        }
        let entropies = entity_tokens
            .iter()
            .map(|&i| self.token(&sentence.tokens[i], vocab))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(aggregation.fold(entropies))
    }
}

/// Natural-log token entropy scaled by `1/vocab`.
pub fn token_entropy<P: Probability>(
    dist: &TokenDistribution<P>,
    vocab: usize,
) -> Result<f64, MetricsError> {
    EntropyKernel::NATURAL.token(dist, vocab)
}

/// Mean token entropy over all decode steps of a sentence.
pub fn avg_entropy<P: Probability>(
    sentence: &SentenceDistributions<P>,
    vocab: usize,
) -> Result<f64, MetricsError> {
    EntropyKernel::NATURAL.average(sentence, vocab)
}

/// Entropy over named-entity token positions only, folded by `aggregation`.
pub fn perents<P: Probability>(
    sentence: &SentenceDistributions<P>,
    entity_tokens: &BTreeSet<usize>,
    aggregation: Aggregation,
    vocab: usize,
) -> Result<Option<f64>, MetricsError> {
    EntropyKernel::NATURAL.perents(sentence, entity_tokens, aggregation, vocab)
}
