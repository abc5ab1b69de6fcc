//! Teacher-forced training with per-epoch validation and best-epoch
//! selection, plus the per-epoch cost table.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{make_batch, Batch, Corpus, HyperParams, Split, Subroutine, Variant, Vocab};
use crate::error::{Error, Result};
use crate::models::{Model, ModelCheckpoint, ModelConfig, TrainingMeta};
use crate::substrate::{clip_global_norm, AdamConfig};

pub const DEFAULT_MAX_EPOCHS: usize = 10;

/// Wall-clock timer; browsers have no `Instant`, so epochs there time as 0.
struct Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    started: std::time::Instant,
}

impl Stopwatch {
    fn start() -> Self {
        Self {
            #[cfg(not(target_arch = "wasm32"))]
            started: std::time::Instant::now(),
        }
    }

    fn seconds(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        return self.started.elapsed().as_secs_f64();
        #[cfg(target_arch = "wasm32")]
        0.0
    }
}
pub const CLIP_NORM: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub variant: Variant,
    pub hp: HyperParams,
    pub max_epochs: usize,
    pub shuffle_seed: u64,
    pub clip_norm: f64,
}

impl TrainConfig {
    pub fn new(variant: Variant, hp: HyperParams) -> Self {
        Self {
            variant,
            hp,
            max_epochs: DEFAULT_MAX_EPOCHS,
            shuffle_seed: 0,
            clip_norm: CLIP_NORM,
        }
    }
}

/// One line of the epoch log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub variant: Variant,
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
    pub seconds: f64,
    pub params: usize,
    pub context_bytes: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: ModelCheckpoint,
    /// parameters after the last epoch, whether or not it was the best
    pub last: Model,
    pub log: Vec<EpochLog>,
}

/// Splits `examples` into batches of `hp.batch_size` in the given order.
pub fn batches(
    examples: &[&Subroutine],
    corpus: &Corpus,
    vocab: &Vocab,
    hp: &HyperParams,
    variant: Variant,
) -> Result<Vec<Batch>> {
    examples
        .chunks(hp.batch_size)
        .map(|chunk| make_batch(chunk, corpus, vocab, hp, variant))
        .collect()
}

/// Teacher-forced next-token predictions `[B × T]` for a batch.
pub trait TokenPredictor: Sync {
    fn predict(&self, batch: &Batch) -> Result<Vec<usize>>;
}

impl TokenPredictor for Model {
    fn predict(&self, batch: &Batch) -> Result<Vec<usize>> {
        self.predict_teacher_forced(batch)
    }
}

fn batch_counts<P: TokenPredictor + ?Sized>(model: &P, batch: &Batch) -> Result<(usize, usize)> {
    let pred = model.predict(batch)?;
    let mut hit = 0;
    let mut total = 0;
    for ((p, t), &m) in pred.iter().zip(&batch.dec_target).zip(&batch.dec_mask) {
        if m {
            total += 1;
            hit += usize::from(p == t);
        }
    }
    Ok((hit, total))
}

/// Correct and total unmasked target positions under teacher forcing.
pub fn token_counts<P: TokenPredictor + ?Sized>(model: &P, batches: &[Batch]) -> Result<(usize, usize)> {
    #[cfg(feature = "parallel")]
    let counts: Vec<(usize, usize)> = {
        use rayon::prelude::*;
        batches.par_iter().map(|b| batch_counts(model, b)).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let counts: Vec<(usize, usize)> = batches.iter().map(|b| batch_counts(model, b)).collect::<Result<_>>()?;
    Ok(counts.into_iter().fold((0, 0), |(h, t), (bh, bt)| (h + bh, t + bt)))
}

/// Teacher-forced token accuracy over unmasked positions.
pub fn validation_accuracy<P: TokenPredictor + ?Sized>(model: &P, batches: &[Batch]) -> Result<f64> {
    if batches.is_empty() {
        return Err(Error::invalid("validation split is empty"));
    }
    let (hit, total) = token_counts(model, batches)?;
    if total == 0 {
        return Err(Error::invalid("validation split has no target tokens"));
    }
    Ok(hit as f64 / total as f64)
}

/// Index of the best-validation epoch; the earliest wins ties.
pub fn best_epoch(log: &[EpochLog]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, entry) in log.iter().enumerate() {
        if best.is_none_or(|b| entry.val_acc > log[b].val_acc) {
            best = Some(i);
        }
    }
    best
}

/// Trains `cfg.variant` on the corpus's train split, validating on its val
/// split after every epoch. `on_epoch` sees each log line as it is produced.
pub fn train(
    corpus: &Corpus,
    vocab: &Vocab,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    let hp = &cfg.hp;
    let mut model = Model::init(ModelConfig::new(cfg.variant, hp.clone(), vocab)?)?;
    let mut train_set = corpus.split(Split::Train);
    if train_set.is_empty() {
        return Err(Error::invalid("train split is empty"));
    }
    let val_set = corpus.split(Split::Val);
    if val_set.is_empty() {
        return Err(Error::invalid("validation split is empty"));
    }
    if cfg.max_epochs == 0 {
        return Err(Error::invalid("need at least one epoch"));
    }
    let val = batches(&val_set, corpus, vocab, hp, cfg.variant)?;
    let adam = AdamConfig {
        lr: hp.lr,
        ..AdamConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    let mut log: Vec<EpochLog> = Vec::with_capacity(cfg.max_epochs);
    let mut best: Option<(Model, usize, f64)> = None;

    for epoch in 1..=cfg.max_epochs {
        let started = Stopwatch::start();
        train_set.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut tokens = 0usize;
        for (i, chunk) in train_set.chunks(hp.batch_size).enumerate() {
            let batch = make_batch(chunk, corpus, vocab, hp, cfg.variant)?;
            let n = batch.dec_mask.iter().filter(|&&m| m).count();
            if n == 0 {
                continue;
            }
            let (loss, mut grads) = model.loss_and_grads(&batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss {loss} at epoch {epoch}, batch {i} (first example {})",
                    batch.ids[0]
                )));
            }
            clip_global_norm(&mut grads, cfg.clip_norm);
            model.params_mut().adam_update(&grads, &adam)?;
            loss_sum += loss * n as f64;
            tokens += n;
        }
        let val_acc = validation_accuracy(&model, &val)?;
        let entry = EpochLog {
            variant: cfg.variant,
            epoch,
            train_loss: if tokens == 0 { 0.0 } else { loss_sum / tokens as f64 },
            val_acc,
            seconds: started.seconds(),
            params: model.num_params(),
            context_bytes: hp.context_bytes(cfg.variant),
        };
        on_epoch(&entry);
        log.push(entry);
        if best.as_ref().is_none_or(|(_, _, acc)| val_acc > *acc) {
            best = Some((model.clone(), epoch, val_acc));
        }
    }

    let (best_model, epoch, val_acc) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        best: ModelCheckpoint::new(
            best_model,
            TrainingMeta {
                epoch,
                val_acc,
                epochs_run: log.len(),
            },
        ),
        last: model,
        log,
    })
}

/// One row of the cost table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub variant: Variant,
    pub epochs: usize,
    pub minutes_per_epoch: f64,
    pub params: usize,
    pub context_bytes: usize,
    /// minutes/epoch relative to the baseline, when a baseline was logged
    pub ratio_vs_baseline: Option<f64>,
}

/// Mean minutes per epoch and model size, one row per variant.
pub fn report_cost(logs: &[EpochLog]) -> Result<Vec<CostRow>> {
    if logs.is_empty() {
        return Err(Error::invalid("no epochs logged"));
    }
    let mut groups: BTreeMap<Variant, Vec<&EpochLog>> = BTreeMap::new();
    for entry in logs {
        groups.entry(entry.variant).or_default().push(entry);
    }
    let mut rows: Vec<CostRow> = groups
        .into_iter()
        .map(|(variant, entries)| CostRow {
            variant,
            epochs: entries.len(),
            minutes_per_epoch: entries.iter().map(|e| e.seconds).sum::<f64>() / entries.len() as f64 / 60.0,
            params: entries[0].params,
            context_bytes: entries[0].context_bytes,
            ratio_vs_baseline: None,
        })
        .collect();
    if let Some(base) = rows.iter().find(|r| r.variant == Variant::Baseline).map(|r| r.minutes_per_epoch) {
        for row in rows.iter_mut().filter(|r| r.variant != Variant::Baseline) {
            row.ratio_vs_baseline = (base > 0.0).then(|| row.minutes_per_epoch / base);
        }
    }
    Ok(rows)
}

pub fn render_cost_table(rows: &[CostRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<14} {:>6} {:>12} {:>10} {:>14} {:>8}",
        "model", "epochs", "min/epoch", "params", "context bytes", "ratio"
    );
    for r in rows {
        let ratio = r.ratio_vs_baseline.map_or(String::new(), |x| format!("{x:.2}x"));
        let _ = writeln!(
            out,
            "{:<14} {:>6} {:>12.4} {:>10} {:>14} {:>8}",
            r.variant.model_name(),
            r.epochs,
            r.minutes_per_epoch,
            r.params,
            r.context_bytes,
            ratio
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(variant: Variant, epoch: usize, val_acc: f64, seconds: f64) -> EpochLog {
        EpochLog {
            variant,
            epoch,
            train_loss: 1.0,
            val_acc,
            seconds,
            params: 10,
            context_bytes: 0,
        }
    }

    #[test]
    fn best_epoch_prefers_earliest_tie() {
        let log: Vec<EpochLog> = [0.2, 0.5, 0.4, 0.5]
            .iter()
            .enumerate()
            .map(|(i, &a)| entry(Variant::Baseline, i + 1, a, 1.0))
            .collect();
        assert_eq!(best_epoch(&log), Some(1));
        assert_eq!(best_epoch(&[]), None);
    }

    #[test]
    fn cost_table_ratios() {
        let logs = vec![
            entry(Variant::Baseline, 1, 0.1, 60.0),
            entry(Variant::Baseline, 2, 0.1, 120.0),
            entry(Variant::Pc, 1, 0.1, 270.0),
        ];
        let rows = report_cost(&logs).unwrap();
        assert_eq!(rows.len(), 2);
        assert!((rows[0].minutes_per_epoch - 1.5).abs() < 1e-12);
        assert_eq!(rows[0].ratio_vs_baseline, None);
        assert!((rows[1].ratio_vs_baseline.unwrap() - 3.0).abs() < 1e-12);
        assert!(render_cost_table(&rows).contains("attendgru-pc"));

        let only = report_cost(&logs[..2]).unwrap();
        assert!(only.iter().all(|r| r.ratio_vs_baseline.is_none()));
        assert!(report_cost(&[]).is_err());
    }

    #[test]
    fn default_context_memory_is_one_megabyte() {
        assert_eq!(HyperParams::default().context_bytes(Variant::Pc), 1_000_000);
    }
}
