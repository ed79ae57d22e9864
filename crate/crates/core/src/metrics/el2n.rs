//! Error L2-norm between one-hot references and predicted distributions.

use super::MetricsError;
use crate::corpus::{Probability, SentenceDistributions, TokenDistribution};

/// Euclidean distance between the one-hot vector at `target` and `dist`.
///
/// For sparse rows the tail mass is spread uniformly over the unlisted
/// entries, including `target` when it is unlisted.
pub fn step_error<P: Probability>(
    dist: &TokenDistribution<P>,
    target: u32,
    vocab: usize,
) -> Result<f64, MetricsError> {
    let t = target as usize;
    let squared = match dist {
        TokenDistribution::Dense(probs) => {
            if probs.len() != vocab {
                return Err(MetricsError::DimensionMismatch {
                    len: probs.len(),
                    vocab,
                });
            }
            probs
                .iter()
                .enumerate()
                .map(|(i, &p)| {
                    let d = p.into() - if i == t { 1.0 } else { 0.0 };
                    d * d
                })
                .sum::<f64>()
        }
        TokenDistribution::Sparse {
            indices,
            probs,
            tail_mass,
        } => {
            let mut acc = 0.0;
            let mut target_listed = false;
            for (&i, &p) in indices.iter().zip(probs) {
                let p: f64 = p.into();
                if i == target {
                    target_listed = true;
                    acc += (1.0 - p) * (1.0 - p);
                } else {
                    acc += p * p;
                }
            }
            let unlisted = vocab - indices.len();
            if unlisted > 0 {
                let share = (*tail_mass).into() / unlisted as f64;
                if target_listed {
                    acc += unlisted as f64 * share * share;
                } else {
                    acc += (1.0 - share) * (1.0 - share) + (unlisted - 1) as f64 * share * share;
                }
            } else if !target_listed {
                // every entry is listed, so the target must be too
                return Err(MetricsError::DimensionMismatch {
                    len: indices.len(),
                    vocab,
                });
            }
            acc
        }
    };
    Ok(squared.sqrt())
}

/// Mean per-position error over the first `min(|Y|, |Ŷ|)` positions,
/// aligning reference and prediction by position.
pub fn el2n<P: Probability>(
    sentence: &SentenceDistributions<P>,
    vocab: usize,
) -> Result<f64, MetricsError> {
    let refs = sentence
        .reference_ids
        .as_deref()
        .ok_or_else(|| MetricsError::MissingReference(sentence.id.clone()))?;
    if refs.is_empty() {
        return Err(MetricsError::MissingReference(sentence.id.clone()));
    }
    if sentence.is_empty() {
        return Err(MetricsError::EmptySentence(sentence.id.clone()));
    }
    if let Some(&bad) = refs.iter().find(|&&r| r as usize >= vocab) {
        return Err(MetricsError::ReferenceOutOfRange {
            id: sentence.id.clone(),
            token_id: bad,
            vocab,
        });
    }
    let len = refs.len().min(sentence.len());
    let mut acc = 0.0;
    for (dist, &target) in sentence.tokens.iter().zip(refs).take(len) {
        acc += step_error(dist, target, vocab)?;
    }
    Ok(acc / len as f64)
}
