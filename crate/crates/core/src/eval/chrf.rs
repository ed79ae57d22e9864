use std::collections::HashMap;
use std::hash::Hash;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_lengths, Components, EvalError, EvalReport};

pub const CHAR_ORDER: usize = 6;
pub const WORD_ORDER: usize = 2;
pub const BETA: f64 = 2.0;

const ORDERS: usize = CHAR_ORDER + WORD_ORDER;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderKind {
    Char,
    Word,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderScore {
    pub kind: OrderKind,
    pub n: usize,
    pub matches: u64,
    pub hyp_total: u64,
    pub ref_total: u64,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    /// True when neither side has any n-gram of this order.
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChrfComponents {
    pub beta: f64,
    pub orders: Vec<OrderScore>,
}

#[derive(Default, Clone, Copy)]
struct Counts {
    matches: u64,
    hyp: u64,
    reference: u64,
}

type Stats = [Counts; ORDERS];

fn merge(mut a: Stats, b: Stats) -> Stats {
    for (x, y) in a.iter_mut().zip(b) {
        x.matches += y.matches;
        x.hyp += y.hyp;
        x.reference += y.reference;
    }
    a
}

fn overlap<T: Hash + Eq>(hyp: &[T], reference: &[T], n: usize) -> Counts {
    let mut r: HashMap<&[T], u64> = HashMap::new();
    for g in reference.windows(n) {
        *r.entry(g).or_insert(0) += 1;
    }
    let mut matches = 0;
    for g in hyp.windows(n) {
        if let Some(c) = r.get_mut(g).filter(|c| **c > 0) {
            *c -= 1;
            matches += 1;
        }
    }
    Counts {
        matches,
        hyp: hyp.len().saturating_sub(n - 1) as u64,
        reference: reference.len().saturating_sub(n - 1) as u64,
    }
}

fn sentence_stats(hyp: &str, reference: &str) -> Stats {
    let chars = |s: &str| s.chars().filter(|c| !c.is_whitespace()).collect::<Vec<_>>();
    let (hc, rc) = (chars(hyp), chars(reference));
    let hw: Vec<&str> = hyp.split_whitespace().collect();
    let rw: Vec<&str> = reference.split_whitespace().collect();
    let mut s = [Counts::default(); ORDERS];
    for n in 1..=CHAR_ORDER {
        s[n - 1] = overlap(&hc, &rc, n);
    }
    for n in 1..=WORD_ORDER {
        s[CHAR_ORDER + n - 1] = overlap(&hw, &rw, n);
    }
    s
}

fn f_beta(p: f64, r: f64) -> f64 {
    let b2 = BETA * BETA;
    if p + r == 0.0 {
        0.0
    } else {
        (1.0 + b2) * p * r / (b2 * p + r)
    }
}

/// Corpus ChrF++: character n-grams of order 1..6 (whitespace removed) and
/// word n-grams of order 1..2, each pooled over the corpus into a
/// precision, recall and F-beta with beta = 2. The score is the mean F over
/// orders that occur on at least one side, times 100.
pub fn chrf_pp<S: AsRef<str> + Sync>(hyps: &[S], refs: &[S]) -> Result<EvalReport, EvalError> {
    check_lengths(hyps.len(), refs.len())?;
    let stats = hyps
        .par_iter()
        .zip(refs.par_iter())
        .map(|(h, r)| sentence_stats(h.as_ref(), r.as_ref()))
        .reduce(|| [Counts::default(); ORDERS], merge);

    let orders: Vec<OrderScore> = stats
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let (kind, n) = if i < CHAR_ORDER {
                (OrderKind::Char, i + 1)
            } else {
                (OrderKind::Word, i - CHAR_ORDER + 1)
            };
            let ratio = |d: u64| if d == 0 { 0.0 } else { c.matches as f64 / d as f64 };
            let (precision, recall) = (ratio(c.hyp), ratio(c.reference));
            OrderScore {
                kind,
                n,
                matches: c.matches,
                hyp_total: c.hyp,
                ref_total: c.reference,
                precision,
                recall,
                f_score: f_beta(precision, recall),
                skipped: c.hyp == 0 && c.reference == 0,
            }
        })
        .collect();
    let active: Vec<f64> = orders.iter().filter(|o| !o.skipped).map(|o| o.f_score).collect();
    let score = if active.is_empty() {
        0.0
    } else {
        100.0 * active.iter().sum::<f64>() / active.len() as f64
    };
    Ok(EvalReport {
        metric: "chrf++".to_owned(),
        score,
        sentences: hyps.len(),
        components: Components::Chrf(ChrfComponents { beta: BETA, orders }),
    })
}
