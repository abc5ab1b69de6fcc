//! Subroutine, file and project encoders, and the attention shared by every
//! model variant. All functions are batched and record onto a [`Tape`].

use crate::error::{Error, Result};
use crate::substrate::{Gru, Real, Tape, Tensor, Var};

/// Per-position GRU states and final states of a batch of token sequences.
#[derive(Debug, Clone, Copy)]
pub struct Encoded {
    /// `[N × w × e]`
    pub states: Var,
    /// `[N × e]`
    pub last: Var,
}

/// Runs `gru` over `n` sequences of `w` tokens (`tokens`, `mask` laid out
/// `[n × w]`), embedding each token from `embed`. Starts from a zero state;
/// a masked position leaves the state unchanged, so an all-masked sequence
/// ends at zero.
pub fn encode_tokens<R: Real>(
    tape: &mut Tape<R>,
    gru: &Gru,
    embed: Var,
    tokens: &[usize],
    mask: &[bool],
    n: usize,
    w: usize,
) -> Result<Encoded> {
    if tokens.len() != n * w || mask.len() != n * w {
        return Err(Error::shape(
            "encode_tokens",
            format!("{} tokens, {} mask for {n}×{w}", tokens.len(), mask.len()),
        ));
    }
    let h0 = tape.input(Tensor::zeros(&[n, gru.hidden()]));
    let mut xs = Vec::with_capacity(w);
    let mut steps = Vec::with_capacity(w);
    for t in 0..w {
        let idx: Vec<usize> = (0..n).map(|i| tokens[i * w + t]).collect();
        xs.push(tape.gather(embed, &idx)?);
        steps.push((0..n).map(|i| mask[i * w + t]).collect::<Vec<bool>>());
    }
    let (states, last) = gru.sequence(tape, &xs, h0, &steps)?;
    let states = tape.stack(&states)?;
    Ok(Encoded { states, last })
}

/// Subroutine vectors: final state of the word-level GRU, `[n × e]`.
pub fn embed_subroutine<R: Real>(
    tape: &mut Tape<R>,
    gru: &Gru,
    embed: Var,
    tokens: &[usize],
    mask: &[bool],
    n: usize,
    w: usize,
) -> Result<Var> {
    Ok(encode_tokens(tape, gru, embed, tokens, mask, n, w)?.last)
}

/// File vectors from subroutine vectors `[n·s × e]` (file-major), through
/// the file-level GRU. `sub_mask` is `[n × s]`.
pub fn embed_file<R: Real>(tape: &mut Tape<R>, gru: &Gru, subs: Var, sub_mask: &[bool], n: usize, s: usize) -> Result<Var> {
    let rows = tape.value(subs).outer();
    if rows != n * s || sub_mask.len() != n * s {
        return Err(Error::shape(
            "embed_file",
            format!("{rows} subroutine rows, {} mask for {n}×{s}", sub_mask.len()),
        ));
    }
    let h0 = tape.input(Tensor::zeros(&[n, gru.hidden()]));
    let mut xs = Vec::with_capacity(s);
    let mut steps = Vec::with_capacity(s);
    for k in 0..s {
        let idx: Vec<usize> = (0..n).map(|i| i * s + k).collect();
        xs.push(tape.gather(subs, &idx)?);
        steps.push((0..n).map(|i| sub_mask[i * s + k]).collect::<Vec<bool>>());
    }
    Ok(gru.sequence(tape, &xs, h0, &steps)?.1)
}

/// Arranges `[B·f × e]` file vectors as the `[B × f × e]` project matrix.
/// Rows are kept as they are; nothing is pooled.
pub fn embed_project_context<R: Real>(
    tape: &mut Tape<R>,
    files: Var,
    file_mask: &[bool],
    b: usize,
    f: usize,
) -> Result<(Var, Vec<bool>)> {
    let value = tape.value(files);
    if value.outer() != b * f || file_mask.len() != b * f {
        return Err(Error::shape(
            "embed_project_context",
            format!("{} file rows, {} mask for {b}×{f}", value.outer(), file_mask.len()),
        ));
    }
    let e = value.last_dim();
    Ok((tape.reshape(files, &[b, f, e])?, file_mask.to_vec()))
}

/// Dot-score global attention: `queries [B×T×e]` over `keys [B×N×e]`,
/// which double as values. Returns `(contexts [B×T×e], weights [B×T×N])`.
/// A query with no unmasked key gets zero weights and a zero context.
pub fn attention<R: Real>(tape: &mut Tape<R>, queries: Var, keys: Var, mask: &[bool]) -> Result<(Var, Var)> {
    let scores = tape.bmm_nt(queries, keys)?;
    let weights = tape.masked_softmax(scores, mask)?;
    let contexts = tape.bmm(weights, keys)?;
    Ok((contexts, weights))
}
