use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

/// Corpus BLEU-4, reported ×100.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bleu {
    pub score: f64,
    /// modified n-gram precisions for n = 1..4, ×100
    pub precisions: [f64; MAX_ORDER],
    pub brevity_penalty: f64,
    pub candidate_len: usize,
    pub reference_len: usize,
}

fn ngrams(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for g in tokens.windows(n) {
            *out.entry(g).or_insert(0) += 1;
        }
    }
    out
}

/// Clipped matches and candidate n-gram count for one order.
fn clipped(candidate: &[String], reference: &[String], n: usize) -> (usize, usize) {
    let cand = ngrams(candidate, n);
    let refs = ngrams(reference, n);
    let matched = cand.iter().map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0))).sum();
    (matched, candidate.len().saturating_sub(n - 1))
}

fn brevity_penalty(c: usize, r: usize) -> f64 {
    if c == 0 {
        0.0
    } else if c >= r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    }
}

/// Geometric mean over the orders that have any candidate n-grams, so a
/// corpus of short sentences is scored on the orders it has.
fn combine(matched: &[usize; MAX_ORDER], totals: &[usize; MAX_ORDER], smooth: bool) -> f64 {
    let mut log_sum = 0.0;
    let mut used = 0;
    for n in 0..MAX_ORDER {
        if totals[n] == 0 {
            continue;
        }
        let p = if matched[n] > 0 {
            matched[n] as f64 / totals[n] as f64
        } else if smooth {
            1.0 / (totals[n] + 1) as f64
        } else {
            return 0.0;
        };
        log_sum += p.ln();
        used += 1;
    }
    if used == 0 {
        0.0
    } else {
        (log_sum / used as f64).exp()
    }
}

/// Standard corpus-level BLEU-4 without smoothing: clipped counts and
/// lengths are summed over all pairs before the precisions are formed.
pub fn corpus_bleu(pairs: &[(&[String], &[String])]) -> Result<Bleu> {
    if pairs.is_empty() {
        return Err(Error::invalid("BLEU needs at least one prediction"));
    }
    let mut matched = [0usize; MAX_ORDER];
    let mut totals = [0usize; MAX_ORDER];
    let (mut c, mut r) = (0, 0);
    for (cand, reference) in pairs {
        c += cand.len();
        r += reference.len();
        for n in 1..=MAX_ORDER {
            let (m, t) = clipped(cand, reference, n);
            matched[n - 1] += m;
            totals[n - 1] += t;
        }
    }
    let bp = brevity_penalty(c, r);
    let mut precisions = [0.0; MAX_ORDER];
    for n in 0..MAX_ORDER {
        if totals[n] > 0 {
            precisions[n] = 100.0 * matched[n] as f64 / totals[n] as f64;
        }
    }
    Ok(Bleu {
        score: 100.0 * bp * combine(&matched, &totals, false),
        precisions,
        brevity_penalty: bp,
        candidate_len: c,
        reference_len: r,
    })
}

/// Sentence BLEU ×100 with add-one smoothing of orders that match nothing.
/// Only used to rank two predictions for the same subroutine.
pub fn sentence_bleu(candidate: &[String], reference: &[String]) -> f64 {
    let mut matched = [0usize; MAX_ORDER];
    let mut totals = [0usize; MAX_ORDER];
    for n in 1..=MAX_ORDER {
        let (m, t) = clipped(candidate, reference, n);
        matched[n - 1] = m;
        totals[n - 1] = t;
    }
    100.0 * brevity_penalty(candidate.len(), reference.len()) * combine(&matched, &totals, true)
}
