use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_lengths, Components, EvalError, EvalReport};

pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BleuOptions {
    /// Replace a zero match count by this floor (e.g. 0.1) instead of
    /// letting the score collapse to 0.
    pub floor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuComponents {
    pub precisions: [f64; MAX_ORDER],
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
    pub brevity_penalty: f64,
    pub hyp_length: u64,
    pub ref_length: u64,
    pub smoothing: Option<f64>,
}

#[derive(Default, Clone, Copy)]
struct Stats {
    matches: [u64; MAX_ORDER],
    totals: [u64; MAX_ORDER],
    hyp_len: u64,
    ref_len: u64,
}

impl Stats {
    fn merge(mut self, other: Self) -> Self {
        for n in 0..MAX_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
        self
    }
}

fn ngram_counts<'a>(tokens: &'a [&'a str], n: usize) -> HashMap<&'a [&'a str], u64> {
    let mut counts = HashMap::new();
    for g in tokens.windows(n) {
        *counts.entry(g).or_insert(0) += 1;
    }
    counts
}

fn sentence_stats(hyp: &[&str], reference: &[&str]) -> Stats {
    let mut s = Stats {
        hyp_len: hyp.len() as u64,
        ref_len: reference.len() as u64,
        ..Stats::default()
    };
    for n in 1..=MAX_ORDER {
        let h = ngram_counts(hyp, n);
        let r = ngram_counts(reference, n);
        s.totals[n - 1] = hyp.len().saturating_sub(n - 1) as u64;
        s.matches[n - 1] = h
            .iter()
            .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)))
            .sum();
    }
    s
}

pub fn corpus_bleu<S: AsRef<str> + Sync>(hyps: &[Vec<S>], refs: &[Vec<S>]) -> Result<EvalReport, EvalError> {
    corpus_bleu_with(hyps, refs, BleuOptions::default())
}

/// Corpus BLEU over caller-tokenized sentences with one reference each:
/// clipped n-gram precisions for n = 1..4 pooled over the corpus, their
/// geometric mean and the brevity penalty `exp(1 - r/c)` when `c < r`.
pub fn corpus_bleu_with<S: AsRef<str> + Sync>(
    hyps: &[Vec<S>],
    refs: &[Vec<S>],
    options: BleuOptions,
) -> Result<EvalReport, EvalError> {
    check_lengths(hyps.len(), refs.len())?;
    let stats = hyps
        .par_iter()
        .zip(refs.par_iter())
        .map(|(h, r)| {
            let h: Vec<&str> = h.iter().map(AsRef::as_ref).collect();
            let r: Vec<&str> = r.iter().map(AsRef::as_ref).collect();
            sentence_stats(&h, &r)
        })
        .reduce(Stats::default, Stats::merge);

    let mut precisions = [0.0; MAX_ORDER];
    for ((p, &total), &matches) in precisions.iter_mut().zip(&stats.totals).zip(&stats.matches) {
        if total == 0 {
            continue;
        }
        *p = match (matches, options.floor) {
            (0, Some(floor)) => floor / total as f64,
            (m, _) => m as f64 / total as f64,
        };
    }
    let (c, r) = (stats.hyp_len, stats.ref_len);
    let brevity_penalty = if c == 0 {
        0.0
    } else if c < r {
        (1.0 - r as f64 / c as f64).exp()
    } else {
        1.0
    };
    let score = if precisions.iter().any(|&p| p <= 0.0) {
        0.0
    } else {
        let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64;
        (100.0 * brevity_penalty * log_mean.exp()).clamp(0.0, 100.0)
    };
    Ok(EvalReport {
        metric: "bleu".to_owned(),
        score,
        sentences: hyps.len(),
        components: Components::Bleu(BleuComponents {
            precisions,
            matches: stats.matches,
            totals: stats.totals,
            brevity_penalty,
            hyp_length: c,
            ref_length: r,
            smoothing: options.floor,
        }),
    })
}
