//! In-browser demo. Every export takes and returns plain strings (JSON for
//! structured results) so the page needs no bundler.

use ctxsum::corpus::{build_vocab, make_batch, tokenize, Corpus, HyperParams, Split, Variant, Vocab, END, START};
use ctxsum::evaluation::{corpus_bleu, rouge_lcs, sentence_bleu};
use ctxsum::models::{Decodable, Model};
use ctxsum::substrate::argmax;
use ctxsum::synthetic::pipeline_fixture;
use ctxsum::training::{train, TrainConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn to_js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Identifier-splitting tokenizer, as a JSON array of tokens.
#[wasm_bindgen]
pub fn tokenize_code(text: &str) -> String {
    serde_json::to_string(&tokenize(text)).expect("strings serialize")
}

#[derive(Debug, Serialize)]
pub struct Scores {
    pub bleu: f64,
    pub precisions: [f64; 4],
    pub brevity_penalty: f64,
    pub sentence_bleu: f64,
    pub rouge_p: f64,
    pub rouge_r: f64,
    pub rouge_f1: f64,
}

pub fn score_pair(candidate: &str, reference: &str) -> ctxsum::Result<Scores> {
    let (c, r) = (tokenize(candidate), tokenize(reference));
    let pair = [(c.as_slice(), r.as_slice())];
    let bleu = corpus_bleu(&pair)?;
    let rouge = rouge_lcs(&pair)?;
    Ok(Scores {
        bleu: bleu.score,
        precisions: bleu.precisions,
        brevity_penalty: bleu.brevity_penalty,
        sentence_bleu: sentence_bleu(&c, &r),
        rouge_p: rouge.precision,
        rouge_r: rouge.recall,
        rouge_f1: rouge.f1,
    })
}

/// BLEU and ROUGE-LCS for one candidate against one reference.
#[wasm_bindgen]
pub fn score(candidate: &str, reference: &str) -> Result<String, JsError> {
    let s = score_pair(candidate, reference).map_err(to_js)?;
    serde_json::to_string(&s).map_err(to_js)
}

#[derive(Debug, Serialize)]
pub struct EpochLine {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Serialize)]
pub struct Explanation {
    pub id: String,
    pub code: Vec<String>,
    pub reference: Vec<String>,
    pub predicted: Vec<String>,
    /// one row per emitted token (END included), one column per code token
    pub attention: Vec<Vec<f32>>,
}

pub fn demo_hp() -> HyperParams {
    HyperParams {
        e: 24,
        v: 400,
        w: 14,
        s: 3,
        f: 2,
        decode_max_len: 8,
        batch_size: 8,
        lr: 5e-3,
        ..HyperParams::default()
    }
}

/// A small summarizer trained in the page on the bundled accessor corpus.
#[wasm_bindgen]
pub struct Demo {
    corpus: Corpus,
    vocab: Vocab,
    model: Model,
    log: Vec<EpochLine>,
}

impl Demo {
    pub fn train_native(variant: Variant, epochs: usize) -> ctxsum::Result<Self> {
        let corpus = pipeline_fixture().corpus()?;
        let hp = demo_hp();
        let vocab = build_vocab(corpus.split(Split::Train), hp.v)?;
        let mut cfg = TrainConfig::new(variant, hp);
        cfg.max_epochs = epochs;
        let outcome = train(&corpus, &vocab, &cfg, |_| {})?;
        let log = outcome
            .log
            .iter()
            .map(|e| EpochLine {
                epoch: e.epoch,
                train_loss: e.train_loss,
                val_acc: e.val_acc,
            })
            .collect();
        Ok(Self {
            corpus,
            vocab,
            model: outcome.best.model,
            log,
        })
    }

    pub fn explain_native(&self, index: usize) -> ctxsum::Result<Explanation> {
        let tests = self.corpus.split(Split::Test);
        let sub = *tests
            .get(index)
            .ok_or_else(|| ctxsum::Error::Invalid(format!("no test example {index}")))?;
        let hp = &self.model.config().hp;
        let batch = make_batch(&[sub], &self.corpus, &self.vocab, hp, self.model.variant())?;
        let shown = batch.code_mask.iter().filter(|&&m| m).count();
        let code = batch.code[..shown].iter().map(|&i| self.vocab.word(i).to_string()).collect();

        let mut session = self.model.start(&batch)?;
        let (mut prev, mut ids, mut attention) = (START, Vec::new(), Vec::new());
        for _ in 0..hp.decode_max_len {
            let step = session.step(&[prev])?;
            if let Some(a) = &step.code_attention {
                attention.push(a.row(0)[..shown].to_vec());
            }
            prev = argmax(step.probs.row(0));
            if prev == END {
                break;
            }
            ids.push(prev);
        }
        Ok(Explanation {
            id: sub.id.clone(),
            code,
            reference: sub.summary_tokens.clone(),
            predicted: self.vocab.decode(&ids),
            attention,
        })
    }
}

#[wasm_bindgen]
impl Demo {
    /// Trains `variant` ("baseline", "fc" or "pc") for `epochs` epochs.
    #[wasm_bindgen(constructor)]
    pub fn new(variant: &str, epochs: usize) -> Result<Demo, JsError> {
        let variant: Variant = variant.parse().map_err(to_js)?;
        Demo::train_native(variant, epochs).map_err(to_js)
    }

    /// Per-epoch loss and validation accuracy, as JSON.
    pub fn log(&self) -> String {
        serde_json::to_string(&self.log).expect("log serializes")
    }

    pub fn test_count(&self) -> usize {
        self.corpus.split(Split::Test).len()
    }

    pub fn parameter_count(&self) -> usize {
        self.model.num_params()
    }

    /// Greedy summary of test example `index` with its code attention, as JSON.
    pub fn explain(&self, index: usize) -> Result<String, JsError> {
        let e = self.explain_native(index).map_err(to_js)?;
        serde_json::to_string(&e).map_err(to_js)
    }
}
