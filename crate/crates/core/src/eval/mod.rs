//! Corpus-level BLEU and ChrF++.
//!
//! Both metrics pool n-gram statistics over the whole corpus before
//! computing precisions, so sentence order never affects a score.

mod bleu;
mod chrf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bleu::{corpus_bleu, corpus_bleu_with, BleuComponents, BleuOptions, MAX_ORDER};
pub use chrf::{chrf_pp, ChrfComponents, OrderKind, OrderScore, BETA, CHAR_ORDER, WORD_ORDER};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{hyps} hypotheses but {refs} references")]
    LengthMismatch { hyps: usize, refs: usize },
    #[error("empty corpus")]
    EmptyCorpus,
}

pub(crate) fn check_lengths(hyps: usize, refs: usize) -> Result<(), EvalError> {
    if hyps != refs {
        return Err(EvalError::LengthMismatch { hyps, refs });
    }
    if hyps == 0 {
        return Err(EvalError::EmptyCorpus);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "metric", rename_all = "snake_case")]
pub enum Components {
    Bleu(BleuComponents),
    #[serde(rename = "chrf++")]
    Chrf(ChrfComponents),
}

/// A corpus-level score in `[0, 100]` with everything needed to recompute it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: String,
    pub score: f64,
    pub sentences: usize,
    pub components: Components,
}
