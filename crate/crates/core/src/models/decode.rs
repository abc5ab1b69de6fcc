use crate::corpus::{Batch, Vocab, END, START};
use crate::error::{Error, Result};
use crate::substrate::{argmax, Tensor};

/// One decoding step for every row of a batch.
#[derive(Debug, Clone)]
pub struct StepOutput {
    /// `[B × |vocab|]`
    pub probs: Tensor<f32>,
    /// `[B × w]` weights over code positions, when the model has them
    pub code_attention: Option<Tensor<f32>>,
    /// `[B × N]` weights over context rows
    pub context_attention: Option<Tensor<f32>>,
}

pub trait DecodeSession {
    /// Feeds the previous token of each row and returns the next distributions.
    fn step(&mut self, prev: &[usize]) -> Result<StepOutput>;
}

/// Anything that can produce next-token distributions step by step.
pub trait Decodable {
    fn vocab_fingerprint(&self) -> &str;
    fn vocab_size(&self) -> usize;
    fn start<'a>(&'a self, batch: &Batch) -> Result<Box<dyn DecodeSession + 'a>>;
}

/// Element-wise arithmetic mean of equally shaped distributions.
pub fn mean_distribution(dists: &[&Tensor<f32>]) -> Result<Tensor<f32>> {
    let first = dists.first().ok_or_else(|| Error::invalid("mean of zero distributions"))?;
    let mut sum = (*first).clone();
    for d in &dists[1..] {
        if d.shape() != first.shape() {
            return Err(Error::shape("mean_distribution", format!("{:?} vs {:?}", d.shape(), first.shape())));
        }
        sum.add_assign(d);
    }
    sum.scale(1.0 / dists.len() as f32);
    Ok(sum)
}

fn run(sessions: &mut [Box<dyn DecodeSession + '_>], rows: usize, max_len: usize) -> Result<Vec<Vec<usize>>> {
    let mut out = vec![Vec::new(); rows];
    let mut done = vec![false; rows];
    let mut prev = vec![START; rows];
    for _ in 0..max_len {
        let steps = sessions.iter_mut().map(|s| s.step(&prev)).collect::<Result<Vec<_>>>()?;
        let probs = mean_distribution(&steps.iter().map(|s| &s.probs).collect::<Vec<_>>())?;
        if probs.outer() != rows {
            return Err(Error::shape("decode", format!("{} distributions for {rows} rows", probs.outer())));
        }
        for i in 0..rows {
            if done[i] {
                prev[i] = END;
                continue;
            }
            let next = argmax(probs.row(i));
            if next == END {
                done[i] = true;
            } else {
                out[i].push(next);
            }
            prev[i] = next;
        }
        if done.iter().all(|&d| d) {
            break;
        }
    }
    Ok(out)
}

/// Greedy ids per row: argmax each step (ties to the lowest index), stop at
/// END or `max_len`; END itself is dropped.
pub fn greedy_ids(model: &dyn Decodable, batch: &Batch, max_len: usize) -> Result<Vec<Vec<usize>>> {
    let mut sessions = vec![model.start(batch)?];
    run(&mut sessions, batch.size, max_len)
}

/// Greedy summaries for every example in `batch`.
pub fn decode_greedy(model: &dyn Decodable, batch: &Batch, vocab: &Vocab, max_len: usize) -> Result<Vec<Vec<String>>> {
    check_fingerprint(model, vocab)?;
    Ok(greedy_ids(model, batch, max_len)?.iter().map(|ids| vocab.decode(ids)).collect())
}

fn check_fingerprint(model: &dyn Decodable, vocab: &Vocab) -> Result<()> {
    let found = vocab.fingerprint();
    if model.vocab_fingerprint() != found {
        return Err(Error::VocabMismatch {
            expected: model.vocab_fingerprint().to_string(),
            found,
        });
    }
    Ok(())
}

/// Greedy decoding from the mean of the members' distributions. Each member
/// gets its own batch (variants need different context blocks) over the same
/// examples, and every member is fed the ensemble's emitted prefix.
pub fn ensemble_decode(
    members: &[(&dyn Decodable, &Batch)],
    vocab: &Vocab,
    max_len: usize,
) -> Result<Vec<Vec<String>>> {
    let (_, first) = members.first().ok_or_else(|| Error::invalid("ensemble needs at least one model"))?;
    for (model, batch) in members {
        check_fingerprint(*model, vocab)?;
        if batch.ids != first.ids {
            return Err(Error::invalid("ensemble members were given different examples"));
        }
    }
    let mut sessions = members.iter().map(|(m, b)| m.start(b)).collect::<Result<Vec<_>>>()?;
    Ok(run(&mut sessions, first.size, max_len)?.iter().map(|ids| vocab.decode(ids)).collect())
}
