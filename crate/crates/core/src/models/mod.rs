//! The three summarizers (attendgru, attendgru-fc, attendgru-pc), greedy and
//! ensemble decoding, and checkpoints.
//!
//! All variants share one word embedding for code, summaries and context,
//! and the word-level encoder GRU also embeds context subroutines. The
//! project variant adds a file-level GRU; both context variants widen the
//! squash layer from `2e` to `3e` inputs.

mod checkpoint;
mod decode;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use checkpoint::{ModelCheckpoint, TrainingMeta, CHECKPOINT_MAGIC};
pub use decode::{decode_greedy, ensemble_decode, greedy_ids, mean_distribution, DecodeSession, Decodable, StepOutput};

use crate::corpus::{Batch, Context, HyperParams, Variant, Vocab};
use crate::encoders::{attention, embed_file, embed_project_context, embed_subroutine, encode_tokens};
use crate::error::{Error, Result};
use crate::substrate::{dense_specs, gru_specs, softmax, Activation, Dense, Gru, Init, ParamStore, Real, Tape, Tensor, Var};

pub const EMBED_INIT: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub hp: HyperParams,
    /// rows of the embedding and output layers, reserved tokens included
    pub vocab_size: usize,
    pub vocab_fingerprint: String,
}

impl ModelConfig {
    pub fn new(variant: Variant, hp: HyperParams, vocab: &Vocab) -> Result<Self> {
        hp.validate()?;
        Ok(Self {
            variant,
            hp,
            vocab_size: vocab.len(),
            vocab_fingerprint: vocab.fingerprint(),
        })
    }

    pub fn param_specs(&self) -> Vec<(String, Vec<usize>, Init)> {
        let (e, v) = (self.hp.e, self.vocab_size);
        let mut specs = vec![("embed".to_string(), vec![v, e], Init::Uniform(EMBED_INIT))];
        specs.extend(gru_specs("enc", e, e));
        specs.extend(gru_specs("dec", e, e));
        if self.variant == Variant::Pc {
            specs.extend(gru_specs("file", e, e));
        }
        let squash_in = if self.variant == Variant::Baseline { 2 * e } else { 3 * e };
        specs.extend(dense_specs("squash", squash_in, e));
        specs.extend(dense_specs("out", e, v));
        specs
    }

    pub fn num_params(&self) -> usize {
        self.param_specs().iter().map(|(_, shape, _)| shape.iter().product::<usize>()).sum()
    }

    pub fn check_vocab(&self, vocab: &Vocab) -> Result<()> {
        let found = vocab.fingerprint();
        if found != self.vocab_fingerprint {
            return Err(Error::VocabMismatch {
                expected: self.vocab_fingerprint.clone(),
                found,
            });
        }
        Ok(())
    }
}

/// A configuration with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore<f32>,
}

impl Model {
    /// Fresh parameters seeded by `hp.init_seed`.
    pub fn init(config: ModelConfig) -> Result<Self> {
        let params = ParamStore::initialize(&config.param_specs(), config.hp.init_seed)?;
        Ok(Self { config, params })
    }

    /// Pairs `params` with `config`, checking every expected tensor is
    /// present with the right shape and nothing else is.
    pub fn from_parts(config: ModelConfig, params: ParamStore<f32>) -> Result<Self> {
        let specs = config.param_specs();
        if specs.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "{} parameters for a {} model that needs {}",
                params.len(),
                config.variant,
                specs.len()
            )));
        }
        for (name, shape, _) in &specs {
            match params.value(name) {
                Some(t) if t.shape() == shape.as_slice() => {}
                Some(t) => {
                    return Err(Error::Checkpoint(format!("{name} has shape {:?}, expected {shape:?}", t.shape())));
                }
                None => return Err(Error::Checkpoint(format!("missing parameter {name}"))),
            }
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn params(&self) -> &ParamStore<f32> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<f32> {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.num_scalars()
    }

    /// Teacher-forced output distributions `[B × T × |vocab|]`.
    pub fn forward(&self, batch: &Batch) -> Result<Tensor<f32>> {
        let mut tape = Tape::new();
        let logits = forward_logits(&mut tape, &self.params, &self.config, batch)?;
        let probs = softmax(tape.value(logits), None)?;
        probs.reshape(&[batch.size, batch.dec_len, self.config.vocab_size])
    }

    /// Teacher-forced argmax predictions `[B × T]`.
    pub fn predict_teacher_forced(&self, batch: &Batch) -> Result<Vec<usize>> {
        let mut tape = Tape::new();
        let logits = forward_logits(&mut tape, &self.params, &self.config, batch)?;
        Ok(tape.value(logits).argmax_rows())
    }

    /// Mean cross-entropy over unmasked target positions and its gradients.
    pub fn loss_and_grads(&self, batch: &Batch) -> Result<(f64, BTreeMap<String, Tensor<f32>>)> {
        let mut tape = Tape::new();
        let loss = loss(&mut tape, &self.params, &self.config, batch)?;
        let value = tape.value(loss).data()[0].to_f64();
        let grads = tape.backward(loss)?;
        Ok((value, tape.param_grads(&grads, &self.params)))
    }
}

fn expect_variant(model: &Model, want: Variant) -> Result<()> {
    if model.variant() != want {
        return Err(Error::invalid(format!(
            "{} called on a {} model",
            want.model_name(),
            model.variant().model_name()
        )));
    }
    Ok(())
}

/// Output distributions of the baseline model.
pub fn forward_attendgru(model: &Model, batch: &Batch) -> Result<Tensor<f32>> {
    expect_variant(model, Variant::Baseline)?;
    model.forward(batch)
}

/// Output distributions of the file-context model.
pub fn forward_attendgru_fc(model: &Model, batch: &Batch) -> Result<Tensor<f32>> {
    expect_variant(model, Variant::Fc)?;
    model.forward(batch)
}

/// Output distributions of the project-context model.
pub fn forward_attendgru_pc(model: &Model, batch: &Batch) -> Result<Tensor<f32>> {
    expect_variant(model, Variant::Pc)?;
    model.forward(batch)
}

/// Layers bound on one tape.
struct Net {
    embed: Var,
    enc: Gru,
    dec: Gru,
    file: Option<Gru>,
    squash: Dense,
    out: Dense,
}

impl Net {
    fn bind<R: Real>(tape: &mut Tape<R>, store: &ParamStore<R>, variant: Variant) -> Result<Self> {
        Ok(Self {
            embed: tape.bind(store, "embed")?,
            enc: Gru::bind(tape, store, "enc")?,
            dec: Gru::bind(tape, store, "dec")?,
            file: match variant {
                Variant::Pc => Some(Gru::bind(tape, store, "file")?),
                _ => None,
            },
            squash: Dense::bind(tape, store, "squash")?,
            out: Dense::bind(tape, store, "out")?,
        })
    }
}

/// What the decoder attends to, plus its initial state.
struct Memory {
    code: Var,
    code_mask: Vec<bool>,
    /// `[B × e]`
    init: Var,
    /// `[B × N × e]` context rows and their `[B × N]` mask
    context: Option<(Var, Vec<bool>)>,
}

fn check_batch(config: &ModelConfig, batch: &Batch) -> Result<()> {
    let hp = &config.hp;
    if batch.code_len != hp.w {
        return Err(Error::shape("model", format!("batch has {} code words, model expects {}", batch.code_len, hp.w)));
    }
    if batch.size == 0 {
        return Err(Error::shape("model", "empty batch"));
    }
    let want = match config.variant {
        Variant::Baseline => return Ok(()),
        Variant::Fc => (1, hp.s),
        Variant::Pc => (hp.f, hp.s),
    };
    let block = match (&batch.context, config.variant) {
        (Context::File(b), Variant::Fc) | (Context::Project(b), Variant::Pc) => b,
        _ => {
            return Err(Error::invalid(format!(
                "{} needs a {} context block; batch has none",
                config.variant.model_name(),
                if config.variant == Variant::Fc { "file" } else { "project" }
            )))
        }
    };
    if (block.files, block.subs) != want || block.words != hp.w {
        return Err(Error::shape(
            "model",
            format!(
                "context block {}×{}×{} vs model {}×{}×{}",
                block.files, block.subs, block.words, want.0, want.1, hp.w
            ),
        ));
    }
    Ok(())
}

fn encode<R: Real>(tape: &mut Tape<R>, net: &Net, config: &ModelConfig, batch: &Batch) -> Result<Memory> {
    check_batch(config, batch)?;
    let (b, w) = (batch.size, batch.code_len);
    let code = encode_tokens(tape, &net.enc, net.embed, &batch.code, &batch.code_mask, b, w)?;
    let context = match (config.variant, &batch.context) {
        (Variant::Fc, Context::File(block)) => {
            let n = b * block.subs;
            let subs = embed_subroutine(tape, &net.enc, net.embed, &block.tokens, &block.word_mask, n, w)?;
            let rows = tape.reshape(subs, &[b, block.subs, config.hp.e])?;
            Some((rows, block.sub_mask.clone()))
        }
        (Variant::Pc, Context::Project(block)) => {
            let n = b * block.files * block.subs;
            let subs = embed_subroutine(tape, &net.enc, net.embed, &block.tokens, &block.word_mask, n, w)?;
            let file_gru = net.file.as_ref().expect("pc nets bind a file GRU");
            let files = embed_file(tape, file_gru, subs, &block.sub_mask, b * block.files, block.subs)?;
            Some(embed_project_context(tape, files, &block.file_mask, b, block.files)?)
        }
        _ => None,
    };
    Ok(Memory {
        code: code.states,
        code_mask: batch.code_mask.clone(),
        init: code.last,
        context,
    })
}

/// Attention readout for decoder states `[B × T × e]`, giving logits
/// `[B·T × |vocab|]` and the attention weights over code and context.
fn readout<R: Real>(
    tape: &mut Tape<R>,
    net: &Net,
    mem: &Memory,
    states: Var,
) -> Result<(Var, Var, Option<Var>)> {
    let shape = tape.value(states).shape().to_vec();
    let (b, t, e) = (shape[0], shape[1], shape[2]);
    let (code_ctx, code_w) = attention(tape, states, mem.code, &mem.code_mask)?;
    let mut parts = vec![tape.reshape(code_ctx, &[b * t, e])?];
    let mut ctx_w = None;
    if let Some((rows, mask)) = &mem.context {
        let (ctx, w) = attention(tape, states, *rows, mask)?;
        parts.push(tape.reshape(ctx, &[b * t, e])?);
        ctx_w = Some(w);
    }
    parts.push(tape.reshape(states, &[b * t, e])?);
    let joined = tape.concat(&parts)?;
    let squashed = net.squash.apply(tape, joined, Activation::Tanh)?;
    let logits = net.out.apply(tape, squashed, Activation::None)?;
    Ok((logits, code_w, ctx_w))
}

/// Records the teacher-forced forward pass; returns logits `[B·T × |vocab|]`.
pub fn forward_logits<R: Real>(tape: &mut Tape<R>, store: &ParamStore<R>, config: &ModelConfig, batch: &Batch) -> Result<Var> {
    let net = Net::bind(tape, store, config.variant)?;
    let mem = encode(tape, &net, config, batch)?;
    let (b, t) = (batch.size, batch.dec_len);
    if batch.dec_input.len() != b * t {
        return Err(Error::shape("model", format!("{} decoder inputs for {b}×{t}", batch.dec_input.len())));
    }
    let mut h = mem.init;
    let mut states = Vec::with_capacity(t);
    for ti in 0..t {
        let idx: Vec<usize> = (0..b).map(|i| batch.dec_input[i * t + ti]).collect();
        let x = tape.gather(net.embed, &idx)?;
        h = net.dec.step(tape, x, h)?;
        states.push(h);
    }
    let states = tape.stack(&states)?;
    Ok(readout(tape, &net, &mem, states)?.0)
}

/// Teacher-forced mean cross-entropy as a scalar node.
pub fn loss<R: Real>(tape: &mut Tape<R>, store: &ParamStore<R>, config: &ModelConfig, batch: &Batch) -> Result<Var> {
    let logits = forward_logits(tape, store, config, batch)?;
    tape.softmax_cross_entropy(logits, &batch.dec_target, &batch.dec_mask)
}

/// Incremental decoder over one batch.
struct Session<'a> {
    model: &'a Model,
    tape: Tape<f32>,
    net: Net,
    mem: Memory,
    h: Var,
    size: usize,
}

impl<'a> Session<'a> {
    fn new(model: &'a Model, batch: &Batch) -> Result<Self> {
        let mut tape = Tape::new();
        let net = Net::bind(&mut tape, &model.params, model.variant())?;
        let mem = encode(&mut tape, &net, &model.config, batch)?;
        let h = mem.init;
        Ok(Self {
            model,
            tape,
            net,
            mem,
            h,
            size: batch.size,
        })
    }
}

impl DecodeSession for Session<'_> {
    fn step(&mut self, prev: &[usize]) -> Result<StepOutput> {
        if prev.len() != self.size {
            return Err(Error::shape("decode", format!("{} previous tokens for {} rows", prev.len(), self.size)));
        }
        let tape = &mut self.tape;
        let x = tape.gather(self.net.embed, prev)?;
        self.h = self.net.dec.step(tape, x, self.h)?;
        let e = self.model.config.hp.e;
        let query = tape.reshape(self.h, &[self.size, 1, e])?;
        let (logits, code_w, ctx_w) = readout(tape, &self.net, &self.mem, query)?;
        let flat = |t: &Tensor<f32>| {
            let n = t.last_dim();
            t.reshape(&[t.len() / n, n])
        };
        Ok(StepOutput {
            probs: softmax(tape.value(logits), None)?,
            code_attention: Some(flat(tape.value(code_w))?),
            context_attention: ctx_w.map(|w| flat(tape.value(w))).transpose()?,
        })
    }
}

impl Decodable for Model {
    fn vocab_fingerprint(&self) -> &str {
        &self.config.vocab_fingerprint
    }

    fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    fn start<'a>(&'a self, batch: &Batch) -> Result<Box<dyn DecodeSession + 'a>> {
        Ok(Box::new(Session::new(self, batch)?))
    }
}
