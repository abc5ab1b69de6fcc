//! Property suite shared by the `invariants` and `acceptance` targets. Every
//! property runs on a seeded runner, so a failure replays exactly.

#![allow(dead_code)]

use std::sync::OnceLock;

use ctxsum::corpus::{build_vocab, make_batch, Batch, Context, Corpus, HyperParams, RawRecord, Split, TextOrTokens, Variant, Vocab, PAD};
use ctxsum::encoders::{attention, embed_file, embed_project_context, embed_subroutine};
use ctxsum::evaluation::{
    action_word_metrics, corpus_bleu, lcs_len, per_method_comparison, rouge_lcs, Grouping, PredictionSet, References,
};
use ctxsum::models::{greedy_ids, loss, Model, ModelCheckpoint, ModelConfig, TrainingMeta};
use ctxsum::substrate::{
    dense_specs, finite_difference_check, gru_specs, softmax, AdamConfig, Dense, FdConfig, Gru, Init, ParamStore,
    Tape, Tensor, Activation,
};
use ctxsum::synthetic::{context_fixture, overfit_fixture, pipeline_fixture, ContextFixture};
use ctxsum::training::{best_epoch, train, EpochLog, TrainConfig};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestError, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SUITE_SEED: u64 = 0x5eed_c0de;

pub struct Invariant {
    pub module: &'static str,
    pub name: &'static str,
    pub cases: u32,
    pub check: fn(&mut TestRunner) -> Result<(), String>,
}

pub fn runner(cases: u32, seed: u64) -> TestRunner {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::from_seed(RngAlgorithm::ChaCha, &bytes),
    )
}

pub fn run(inv: &Invariant) -> Result<(), String> {
    (inv.check)(&mut runner(inv.cases, SUITE_SEED))
}

fn report<T: std::fmt::Debug>(r: Result<(), TestError<T>>) -> Result<(), String> {
    r.map_err(|e| match e {
        TestError::Fail(why, input) => format!("{why} (input {input:?})"),
        TestError::Abort(why) => format!("aborted: {why}"),
    })
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(TestCaseError::fail(format!($($fmt)+)));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, TestCaseError> {
    r.map_err(|e| TestCaseError::fail(e.to_string()))
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| (rng.random::<f64>() - 0.5) * 2.0 * scale).collect()
}

fn words(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

// ---- fixtures --------------------------------------------------------------

pub fn tiny_hp() -> HyperParams {
    HyperParams {
        e: 6,
        v: 80,
        w: 5,
        s: 2,
        f: 2,
        decode_max_len: 4,
        batch_size: 4,
        ..HyperParams::default()
    }
}

struct World {
    corpus: Corpus,
    vocab: Vocab,
}

fn world() -> &'static World {
    static W: OnceLock<World> = OnceLock::new();
    W.get_or_init(|| {
        let corpus = context_fixture(&ContextFixture {
            train_per_domain: 1,
            heldout_per_domain: 1,
            ..ContextFixture::default()
        })
        .corpus()
        .expect("fixture builds");
        let vocab = build_vocab(corpus.split(Split::Train), tiny_hp().v).expect("vocab");
        World { corpus, vocab }
    })
}

fn batch_of(picks: &[usize], variant: Variant, hp: &HyperParams) -> Result<Batch, TestCaseError> {
    let w = world();
    let subs = w.corpus.subroutines();
    let chosen: Vec<&_> = picks.iter().map(|&i| &subs[i % subs.len()]).collect();
    ok(make_batch(&chosen, &w.corpus, &w.vocab, hp, variant))
}

fn model(variant: Variant, hp: &HyperParams) -> Result<Model, TestCaseError> {
    ok(Model::init(ok(ModelConfig::new(variant, hp.clone(), &world().vocab))?))
}

fn variant() -> impl Strategy<Value = Variant> {
    prop_oneof![Just(Variant::Baseline), Just(Variant::Fc), Just(Variant::Pc)]
}

fn picks() -> impl Strategy<Value = Vec<usize>> {
    proptest::collection::vec(0usize..10_000, 1..5)
}

// ---- substrate -------------------------------------------------------------

fn softmax_is_masked_distribution(r: &mut TestRunner) -> Result<(), String> {
    let row = proptest::collection::vec((-30.0f64..30.0, any::<bool>()), 1..12);
    report(r.run(&row, |row| {
        let logits: Vec<f64> = row.iter().map(|x| x.0).collect();
        let mut mask: Vec<bool> = row.iter().map(|x| x.1).collect();
        mask[0] = true;
        let x = ok(Tensor::vector(logits))?;
        for m in [None, Some(mask.as_slice())] {
            let p = ok(softmax(&x, m))?;
            let sum: f64 = p.data().iter().sum();
            ensure!((sum - 1.0).abs() < 1e-6, "sum {sum}");
            ensure!(p.data().iter().all(|&v| v >= 0.0), "negative weight");
            if let Some(m) = m {
                ensure!(p.data().iter().zip(m).all(|(&v, &k)| k || v == 0.0), "mass on a masked entry");
            }
        }
        Ok(())
    }))
}

fn gru_sequence_is_fold_of_steps(r: &mut TestRunner) -> Result<(), String> {
    let shape = (any::<u64>(), 1usize..4, 1usize..5, 1usize..4, 1usize..6);
    report(r.run(&shape, |(seed, e_in, e, b, t)| {
        let store: ParamStore<f64> = ok(ParamStore::initialize(&gru_specs("g", e_in, e), seed))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tape = Tape::new();
        let gru = ok(Gru::bind(&mut tape, &store, "g"))?;
        let xs: Vec<_> = (0..t)
            .map(|_| tape.input(Tensor::matrix(b, e_in, uniform(&mut rng, b * e_in, 1.0)).unwrap()))
            .collect();
        let h0 = tape.input(Tensor::matrix(b, e, uniform(&mut rng, b * e, 1.0)).unwrap());
        let (states, last) = ok(gru.sequence(&mut tape, &xs, h0, &vec![vec![true; b]; t]))?;
        let mut h = h0;
        for (x, s) in xs.iter().zip(&states) {
            h = ok(gru.step(&mut tape, *x, h))?;
            ensure!(tape.value(h) == tape.value(*s), "state differs from folded step");
        }
        ensure!(tape.value(h) == tape.value(last), "final state differs");
        Ok(())
    }))
}

fn adam_is_deterministic(r: &mut TestRunner) -> Result<(), String> {
    report(r.run(&(any::<u64>(), 1usize..4), |(seed, steps)| {
        let specs = [gru_specs("g", 3, 2), dense_specs("d", 2, 3)].concat();
        let start: ParamStore<f32> = ok(ParamStore::initialize(&specs, seed))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let grads: Vec<_> = (0..steps)
            .map(|_| {
                start
                    .values()
                    .map(|(n, t)| {
                        let g: Vec<f32> = uniform(&mut rng, t.len(), 2.0).iter().map(|&x| x as f32).collect();
                        (n.to_string(), Tensor::new(t.shape().to_vec(), g).unwrap())
                    })
                    .collect::<std::collections::BTreeMap<_, _>>()
            })
            .collect();
        let mut a = start.clone();
        let mut b = start.clone();
        for g in &grads {
            ok(a.adam_update(g, &AdamConfig::default()))?;
            ok(b.adam_update(g, &AdamConfig::default()))?;
        }
        for ((_, x), (_, y)) in a.values().zip(b.values()) {
            ensure!(
                x.data().iter().zip(y.data()).all(|(p, q)| p.to_bits() == q.to_bits()),
                "updates differ"
            );
        }
        Ok(())
    }))
}

fn layer_gradients_match_fd(r: &mut TestRunner) -> Result<(), String> {
    report(r.run(&(any::<u64>(), 1usize..4, 2usize..4), |(seed, t, classes)| {
        let specs = [gru_specs("g", 2, 3), dense_specs("d", 3, classes)].concat();
        let mut store: ParamStore<f64> = ok(ParamStore::initialize(&specs, seed))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
        let names: Vec<String> = store.names().map(str::to_string).collect();
        for n in names {
            for x in store.value_mut(&n).unwrap().data_mut() {
                *x += (rng.random::<f64>() - 0.5) * 0.6;
            }
        }
        let xs: Vec<Tensor<f64>> = (0..t).map(|_| Tensor::matrix(2, 2, uniform(&mut rng, 4, 1.0)).unwrap()).collect();
        let targets: Vec<usize> = (0..2).map(|_| rng.random_range(0..classes)).collect();
        let rep = ok(finite_difference_check(
            |tape, st| {
                let gru = Gru::bind(tape, st, "g")?;
                let dense = Dense::bind(tape, st, "d")?;
                let inputs: Vec<_> = xs.iter().map(|x| tape.input(x.clone())).collect();
                let h0 = tape.input(Tensor::zeros(&[2, 3]));
                let (_, last) = gru.sequence(tape, &inputs, h0, &vec![vec![true, true]; inputs.len()])?;
                let logits = dense.apply(tape, last, Activation::Tanh)?;
                tape.softmax_cross_entropy(logits, &targets, &[true, true])
            },
            &store,
            &FdConfig::default(),
        ))?;
        ensure!(rep.max_rel_error < 1e-3, "{rep:?}");
        Ok(())
    }))
}

// ---- corpus ----------------------------------------------------------------

fn vocab_ignores_heldout_documents(r: &mut TestRunner) -> Result<(), String> {
    let doc = (proptest::collection::vec("[a-z]{2,7}", 1..10), proptest::collection::vec("[a-z]{2,7}", 1..6));
    let docs = proptest::collection::vec(doc, 1..6);
    let fx = pipeline_fixture();
    let base = fx.corpus().expect("fixture");
    let want = build_vocab(base.split(Split::Train), 30).expect("vocab").fingerprint();
    report(r.run(&(docs, any::<bool>()), |(docs, as_val)| {
        let mut records = fx.records.clone();
        for (i, (code, summary)) in docs.iter().enumerate() {
            records.push(RawRecord {
                id: format!("extra/F.java#{i}"),
                project_id: "extra".into(),
                file_id: "extra/F.java".into(),
                position_in_file: i,
                code: TextOrTokens::Tokens(code.clone()),
                summary: TextOrTokens::Tokens(summary.clone()),
            });
        }
        let mut splits = fx.splits.clone();
        splits.0.push(("extra".into(), if as_val { Split::Val } else { Split::Test }));
        let corpus = ok(Corpus::from_records(records, splits))?;
        let got = ok(build_vocab(corpus.split(Split::Train), 30))?.fingerprint();
        ensure!(got == want, "held-out documents changed the vocabulary");
        Ok(())
    }))
}

fn batch_targets_are_shifted_inputs(r: &mut TestRunner) -> Result<(), String> {
    report(r.run(&(picks(), variant(), 1usize..7), |(picks, v, t)| {
        let hp = HyperParams { decode_max_len: t, ..tiny_hp() };
        let b = batch_of(&picks, v, &hp)?;
        for row in 0..b.size {
            for i in 0..t.saturating_sub(1) {
                let (k, k1) = (row * t + i, row * t + i + 1);
                if b.dec_mask[k] && b.dec_mask[k1] {
                    ensure!(b.dec_target[k] == b.dec_input[k1], "row {row} step {i}");
                }
            }
        }
        Ok(())
    }))
}

// ---- encoders --------------------------------------------------------------

fn attention_weights_are_masked_distributions(r: &mut TestRunner) -> Result<(), String> {
    let shape = (any::<u64>(), 1usize..3, 1usize..4, 1usize..6, 1usize..4);
    report(r.run(&shape, |(seed, b, t, n, e)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mask: Vec<bool> = (0..b * n).map(|_| rng.random_bool(0.6)).collect();
        let mut tape: Tape<f64> = Tape::new();
        let q = tape.input(Tensor::new(vec![b, t, e], uniform(&mut rng, b * t * e, 3.0)).unwrap());
        let k = tape.input(Tensor::new(vec![b, n, e], uniform(&mut rng, b * n * e, 3.0)).unwrap());
        let (ctx, weights) = ok(attention(&mut tape, q, k, &mask))?;
        let wv = tape.value(weights);
        for bi in 0..b {
            let keep = &mask[bi * n..(bi + 1) * n];
            for ti in 0..t {
                let row = wv.row(bi * t + ti);
                ensure!(row.iter().all(|&x| x >= 0.0), "negative weight");
                ensure!(row.iter().zip(keep).all(|(&x, &k)| k || x == 0.0), "weight on masked key");
                let sum: f64 = row.iter().sum();
                if keep.iter().any(|&k| k) {
                    ensure!((sum - 1.0).abs() < 1e-6, "sum {sum}");
                } else {
                    ensure!(sum == 0.0, "weights without any key");
                    let c = &tape.value(ctx).data()[(bi * t + ti) * e..(bi * t + ti + 1) * e];
                    ensure!(c.iter().all(|&x| x == 0.0), "context without any key");
                }
            }
        }
        Ok(())
    }))
}

fn attention_is_monotone_in_a_key_score(r: &mut TestRunner) -> Result<(), String> {
    let case = (proptest::collection::vec(-1.0f64..1.0, 9), 0.05f64..1.0);
    report(r.run(&case, |(v, delta)| {
        let (q, k) = (&v[..3], &v[3..]);
        let qq: f64 = q.iter().map(|x| x * x).sum();
        prop_assume!(qq > 0.01);
        let weight0 = |keys: Vec<f64>| -> Result<f64, TestCaseError> {
            let mut tape: Tape<f64> = Tape::new();
            let qv = tape.input(Tensor::new(vec![1, 1, 3], q.to_vec()).unwrap());
            let kv = tape.input(Tensor::new(vec![1, 2, 3], keys).unwrap());
            let (_, w) = ok(attention(&mut tape, qv, kv, &[true, true]))?;
            Ok(tape.value(w).data()[0])
        };
        let before = weight0(k.to_vec())?;
        // moving key 0 along the query raises its score by delta·|q|²
        let mut raised = k.to_vec();
        for i in 0..3 {
            raised[i] += delta * q[i];
        }
        let after = weight0(raised)?;
        ensure!(after > before, "{before} -> {after}");
        Ok(())
    }))
}

fn hierarchy_store(seed: u64, e: usize, vocab: usize) -> ParamStore<f64> {
    let mut specs = vec![("embed".to_string(), vec![vocab, e], Init::Uniform(0.8))];
    specs.extend(gru_specs("enc", e, e));
    specs.extend(gru_specs("file", e, e));
    for (name, _, init) in specs.iter_mut() {
        if name.contains(".b_") {
            *init = Init::Uniform(0.3);
        }
    }
    ParamStore::initialize(&specs, seed).expect("specs are valid")
}

fn hierarchy_gradients_match_fd(r: &mut TestRunner) -> Result<(), String> {
    report(r.run(&any::<u64>(), |seed| {
        let (e, v, w, s, f, b) = (3, 7, 3, 2, 2, 1);
        let store = hierarchy_store(seed, e, v);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tokens: Vec<usize> = (0..b * f * s * w).map(|_| rng.random_range(0..v)).collect();
        let word_mask: Vec<bool> = (0..b * f * s * w).map(|i| i % w == 0 || rng.random_bool(0.7)).collect();
        let sub_mask: Vec<bool> = (0..b * f * s).map(|i| i % s == 0 || rng.random_bool(0.7)).collect();
        let file_mask: Vec<bool> = (0..b * f).map(|i| i == 0 || rng.random_bool(0.7)).collect();
        let query = Tensor::new(vec![b, 2, e], uniform(&mut rng, b * 2 * e, 1.0)).unwrap();
        let targets: Vec<usize> = (0..b * 2).map(|_| rng.random_range(0..e)).collect();
        let rep = ok(finite_difference_check(
            |tape, st| {
                let enc = Gru::bind(tape, st, "enc")?;
                let file = Gru::bind(tape, st, "file")?;
                let embed = tape.bind(st, "embed")?;
                let subs = embed_subroutine(tape, &enc, embed, &tokens, &word_mask, b * f * s, w)?;
                let files = embed_file(tape, &file, subs, &sub_mask, b * f, s)?;
                let (proj, mask) = embed_project_context(tape, files, &file_mask, b, f)?;
                let q = tape.input(query.clone());
                let (ctx, _) = attention(tape, q, proj, &mask)?;
                let flat = tape.reshape(ctx, &[b * 2, e])?;
                tape.softmax_cross_entropy(flat, &targets, &[true; 2])
            },
            &store,
            &FdConfig::default(),
        ))?;
        ensure!(rep.max_rel_error < 1e-3, "{rep:?}");
        Ok(())
    }))
}

fn empty_context_is_zero(r: &mut TestRunner) -> Result<(), String> {
    report(r.run(&(any::<u64>(), 1usize..3, 1usize..4), |(seed, f, s)| {
        let (e, v, w, b) = (3, 7, 3, 2);
        let store = hierarchy_store(seed, e, v);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tokens: Vec<usize> = (0..b * f * s * w).map(|_| rng.random_range(0..v)).collect();
        let mut tape = Tape::new();
        let enc = ok(Gru::bind(&mut tape, &store, "enc"))?;
        let file = ok(Gru::bind(&mut tape, &store, "file"))?;
        let embed = ok(tape.bind(&store, "embed"))?;
        let subs = ok(embed_subroutine(&mut tape, &enc, embed, &tokens, &vec![true; tokens.len()], b * f * s, w))?;
        let files = ok(embed_file(&mut tape, &file, subs, &vec![false; b * f * s], b * f, s))?;
        ensure!(tape.value(files).data().iter().all(|&x| x == 0.0), "masked file embeds to nonzero");
        let (proj, mask) = ok(embed_project_context(&mut tape, files, &vec![false; b * f], b, f))?;
        let q = tape.input(Tensor::new(vec![b, 1, e], uniform(&mut rng, b * e, 1.0)).unwrap());
        let (ctx, _) = ok(attention(&mut tape, q, proj, &mask))?;
        ensure!(tape.value(ctx).data().iter().all(|&x| x == 0.0), "empty project gives nonzero context");
        Ok(())
    }))
}

// ---- models ----------------------------------------------------------------

fn seeded(hp: &HyperParams, seed: u64) -> HyperParams {
    HyperParams {
        init_seed: seed,
        select_seed: seed,
        ..hp.clone()
    }
}

fn outputs_are_distributions(r: &mut TestRunner) -> Result<(), String> {
    report(r.run(&(any::<u64>(), variant(), picks()), |(seed, v, picks)| {
        let hp = seeded(&tiny_hp(), seed);
        let m = model(v, &hp)?;
        let probs = ok(m.forward(&batch_of(&picks, v, &hp)?))?;
        let vsz = m.config().vocab_size;
        for row in probs.data().chunks(vsz) {
            let sum: f32 = row.iter().sum();
            ensure!((sum - 1.0).abs() < 1e-5, "sum {sum}");
            ensure!(row.iter().all(|&p| p >= 0.0), "negative probability");
        }
        Ok(())
    }))
}

fn mask_context(batch: &mut Batch) {
    if let Context::File(b) | Context::Project(b) = &mut batch.context {
        b.tokens.fill(PAD);
        b.word_mask.fill(false);
        b.sub_mask.fill(false);
        b.file_mask.fill(false);
    }
}

fn masked_context_matches_baseline(r: &mut TestRunner) -> Result<(), String> {
    let ctx_variant = prop_oneof![Just(Variant::Fc), Just(Variant::Pc)];
    report(r.run(&(any::<u64>(), ctx_variant, picks()), |(seed, v, picks)| {
        let hp = seeded(&tiny_hp(), seed);
        let e = hp.e;
        let mut rich = model(v, &hp)?;
        rich.params_mut().value_mut("squash.w").unwrap().data_mut()[e * e..2 * e * e].fill(0.0);
        let mut base = model(Variant::Baseline, &hp)?;
        let w = rich.params().value("squash.w").unwrap();
        let mut rows = w.data()[..e * e].to_vec();
        rows.extend_from_slice(&w.data()[2 * e * e..]);
        *base.params_mut().value_mut("squash.w").unwrap() = Tensor::new(vec![2 * e, e], rows).unwrap();
        for (name, t) in rich.params().values() {
            if name != "squash.w" && !name.starts_with("file.") {
                *base.params_mut().value_mut(name).unwrap() = t.clone();
            }
        }
        let mut batch = batch_of(&picks, v, &hp)?;
        mask_context(&mut batch);
        let (a, b) = (ok(rich.forward(&batch))?, ok(base.forward(&batch_of(&picks, Variant::Baseline, &hp)?))?);
        let worst = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0f32, f32::max);
        ensure!(worst <= 1e-6, "max difference {worst}");
        Ok(())
    }))
}

fn checkpoint_round_trip_is_bit_exact(r: &mut TestRunner) -> Result<(), String> {
    report(r.run(&(any::<u64>(), variant(), picks()), |(seed, v, picks)| {
        let hp = seeded(&tiny_hp(), seed);
        let m = model(v, &hp)?;
        let bytes = ok(ModelCheckpoint::new(m.clone(), TrainingMeta::default()).to_bytes())?;
        let back = ok(ModelCheckpoint::from_bytes(&bytes))?.model;
        let batch = batch_of(&picks, v, &hp)?;
        let (a, b) = (ok(m.forward(&batch))?, ok(back.forward(&batch))?);
        ensure!(
            a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()),
            "forward changed across save/load"
        );
        Ok(())
    }))
}

fn model_gradients_match_fd(r: &mut TestRunner) -> Result<(), String> {
    report(r.run(&(any::<u64>(), variant(), picks()), |(seed, v, picks)| {
        let hp = HyperParams { e: 4, ..seeded(&tiny_hp(), seed) };
        let m = model(v, &hp)?;
        let batch = batch_of(&picks, v, &hp)?;
        let store = m.params().cast::<f64>();
        let cfg = m.config().clone();
        let fd = FdConfig {
            max_coords_per_param: Some(4),
            seed,
            ..FdConfig::default()
        };
        let rep = ok(finite_difference_check(|t, s| loss(t, s, &cfg, &batch), &store, &fd))?;
        ensure!(rep.max_rel_error < 1e-3, "{v}: {rep:?}");
        Ok(())
    }))
}

fn greedy_decode_is_deterministic(r: &mut TestRunner) -> Result<(), String> {
    report(r.run(&(any::<u64>(), variant(), picks()), |(seed, v, picks)| {
        let hp = seeded(&tiny_hp(), seed);
        let m = model(v, &hp)?;
        let batch = batch_of(&picks, v, &hp)?;
        let first = ok(greedy_ids(&m, &batch, 6))?;
        ensure!(first == ok(greedy_ids(&m.clone(), &batch, 6))?, "decode changed between runs");
        Ok(())
    }))
}

// ---- training --------------------------------------------------------------

fn log_line(epoch: usize, val_acc: f64) -> EpochLog {
    EpochLog {
        variant: Variant::Baseline,
        epoch,
        train_loss: 1.0,
        val_acc,
        seconds: 0.0,
        params: 1,
        context_bytes: 0,
    }
}

fn best_epoch_is_earliest_max(r: &mut TestRunner) -> Result<(), String> {
    let accs = proptest::collection::vec(0u8..4, 1..12);
    report(r.run(&accs, |accs| {
        let log: Vec<EpochLog> = accs.iter().enumerate().map(|(i, &a)| log_line(i + 1, a as f64 / 4.0)).collect();
        let max = *accs.iter().max().unwrap();
        let want = accs.iter().position(|&a| a == max);
        ensure!(best_epoch(&log) == want, "{:?} vs {want:?}", best_epoch(&log));
        Ok(())
    }))
}

fn train_hp() -> HyperParams {
    HyperParams {
        e: 10,
        v: 200,
        w: 8,
        s: 2,
        f: 2,
        decode_max_len: 6,
        batch_size: 10,
        ..HyperParams::default()
    }
}

fn same_seed_same_checkpoint(r: &mut TestRunner) -> Result<(), String> {
    let corpus = pipeline_fixture().corpus().expect("fixture");
    let vocab = build_vocab(corpus.split(Split::Train), 200).expect("vocab");
    report(r.run(&(any::<u64>(), variant()), |(seed, v)| {
        let mut cfg = TrainConfig::new(v, seeded(&train_hp(), seed));
        cfg.max_epochs = 2;
        cfg.shuffle_seed = seed;
        let a = ok(train(&corpus, &vocab, &cfg, |_| {}))?;
        let b = ok(train(&corpus, &vocab, &cfg, |_| {}))?;
        ensure!(ok(a.best.to_bytes())? == ok(b.best.to_bytes())?, "checkpoints differ");
        Ok(())
    }))
}

fn overfit_loss_trends_down(r: &mut TestRunner) -> Result<(), String> {
    let corpus = overfit_fixture().corpus().expect("fixture");
    let vocab = build_vocab(corpus.split(Split::Train), 200).expect("vocab");
    report(r.run(&any::<u64>(), |seed| {
        let mut cfg = TrainConfig::new(Variant::Baseline, HyperParams { lr: 3e-3, ..seeded(&train_hp(), seed) });
        cfg.max_epochs = 30;
        cfg.shuffle_seed = seed;
        let out = ok(train(&corpus, &vocab, &cfg, |_| {}))?;
        let means: Vec<f64> = out.log.chunks(10).map(|w| w.iter().map(|e| e.train_loss).sum::<f64>() / 10.0).collect();
        ensure!(means.windows(2).all(|p| p[1] <= p[0]), "10-epoch means {means:?}");
        Ok(())
    }))
}

// ---- evaluation ------------------------------------------------------------

fn sentence() -> impl Strategy<Value = Vec<String>> {
    proptest::collection::vec(prop_oneof![Just("returns"), Just("sets"), Just("the"), Just("a"), Just("value")], 0..6)
        .prop_map(|w| w.into_iter().map(str::to_string).collect())
}

fn gold() -> impl Strategy<Value = Vec<String>> {
    (sentence(), prop_oneof![Just("get"), Just("set"), Just("returns"), Just("adds")]).prop_map(|(mut s, first)| {
        s.insert(0, first.to_string());
        s
    })
}

fn pairs() -> impl Strategy<Value = Vec<(Vec<String>, Vec<String>)>> {
    proptest::collection::vec((sentence(), gold()), 1..10)
}

fn borrow(p: &[(Vec<String>, Vec<String>)]) -> Vec<(&[String], &[String])> {
    p.iter().map(|(c, r)| (c.as_slice(), r.as_slice())).collect()
}

fn metrics_are_permutation_invariant(r: &mut TestRunner) -> Result<(), String> {
    report(r.run(&(pairs(), any::<u64>()), |(p, seed)| {
        let mut shuffled = p.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        let (a, b) = (ok(corpus_bleu(&borrow(&p)))?, ok(corpus_bleu(&borrow(&shuffled)))?);
        ensure!((a.score - b.score).abs() < 1e-9, "BLEU {} vs {}", a.score, b.score);
        let (a, b) = (ok(rouge_lcs(&borrow(&p)))?, ok(rouge_lcs(&borrow(&shuffled)))?);
        ensure!((a.f1 - b.f1).abs() < 1e-9 && (a.precision - b.precision).abs() < 1e-9, "ROUGE changed");
        Ok(())
    }))
}

fn self_bleu_is_100(r: &mut TestRunner) -> Result<(), String> {
    report(r.run(&proptest::collection::vec(gold(), 1..10), |refs| {
        let p: Vec<_> = refs.iter().map(|x| (x.clone(), x.clone())).collect();
        let s = ok(corpus_bleu(&borrow(&p)))?.score;
        ensure!((s - 100.0).abs() < 1e-9, "{s}");
        Ok(())
    }))
}

fn rouge_zero_iff_no_lcs(r: &mut TestRunner) -> Result<(), String> {
    report(r.run(&pairs(), |p| {
        let f1 = ok(rouge_lcs(&borrow(&p)))?.f1;
        let none = p.iter().all(|(c, g)| lcs_len(c, g) == 0);
        ensure!((f1 == 0.0) == none, "F1 {f1} with all-zero LCS = {none}");
        Ok(())
    }))
}

fn macro_recall_bounded_and_monotone(r: &mut TestRunner) -> Result<(), String> {
    report(r.run(&(pairs(), 0usize..10), |(p, fix)| {
        let before = ok(action_word_metrics(&borrow(&p), Grouping::Top40))?;
        ensure!(before.macro_recall <= 1.0, "macro recall {}", before.macro_recall);
        let mut better = p.clone();
        let i = fix % better.len();
        better[i].0 = better[i].1.clone();
        let after = ok(action_word_metrics(&borrow(&better), Grouping::Top40))?;
        for (a, b) in before.words.iter().zip(&after.words) {
            ensure!(b.recall >= a.recall, "{}: {} -> {}", a.word, a.recall, b.recall);
        }
        Ok(())
    }))
}

fn win_tie_loss_partition(r: &mut TestRunner) -> Result<(), String> {
    report(r.run(&proptest::collection::vec((sentence(), sentence(), gold()), 1..12), |rows| {
        let (mut a, mut b, mut refs) = (PredictionSet::new("a"), PredictionSet::new("b"), References::new());
        for (i, (x, y, g)) in rows.iter().enumerate() {
            a.insert(i.to_string(), x.clone());
            b.insert(i.to_string(), y.clone());
            refs.insert(i.to_string(), g.clone());
        }
        let c = ok(per_method_comparison(&a, &b, &refs))?;
        ensure!(c.total() == rows.len(), "{c:?} over {} ids", rows.len());
        Ok(())
    }))
}

pub fn suite() -> Vec<Invariant> {
    macro_rules! inv {
        ($module:literal, $name:ident, $cases:expr) => {
            Invariant {
                module: $module,
                name: stringify!($name),
                cases: $cases,
                check: $name,
            }
        };
    }
    vec![
        inv!("substrate", softmax_is_masked_distribution, 64),
        inv!("substrate", gru_sequence_is_fold_of_steps, 32),
        inv!("substrate", adam_is_deterministic, 32),
        inv!("substrate", layer_gradients_match_fd, 16),
        inv!("corpus", vocab_ignores_heldout_documents, 16),
        inv!("corpus", batch_targets_are_shifted_inputs, 32),
        inv!("encoders", attention_weights_are_masked_distributions, 64),
        inv!("encoders", attention_is_monotone_in_a_key_score, 64),
        inv!("encoders", hierarchy_gradients_match_fd, 8),
        inv!("encoders", empty_context_is_zero, 16),
        inv!("models", outputs_are_distributions, 24),
        inv!("models", masked_context_matches_baseline, 16),
        inv!("models", checkpoint_round_trip_is_bit_exact, 16),
        inv!("models", model_gradients_match_fd, 6),
        inv!("models", greedy_decode_is_deterministic, 16),
        inv!("training", best_epoch_is_earliest_max, 64),
        inv!("training", same_seed_same_checkpoint, 3),
        inv!("training", overfit_loss_trends_down, 2),
        inv!("evaluation", metrics_are_permutation_invariant, 64),
        inv!("evaluation", self_bleu_is_100, 64),
        inv!("evaluation", rouge_zero_iff_no_lcs, 64),
        inv!("evaluation", macro_recall_bounded_and_monotone, 64),
        inv!("evaluation", win_tie_loss_partition, 64),
    ]
}
