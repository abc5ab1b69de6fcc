use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context as _, Result};
use clap::{Args, Parser, Subcommand};
use ctxsum::corpus::{build_vocab, ingest::ingest, load_corpus, make_batch, Batch, Corpus, HyperParams, Split, Variant, Vocab};
use ctxsum::evaluation::{evaluate, references, PredictionSet};
use ctxsum::models::{decode_greedy, ensemble_decode, Decodable, ModelCheckpoint};
use ctxsum::training::{render_cost_table, report_cost, train, EpochLog, TrainConfig};

#[derive(Parser)]
#[command(name = "ctxsum", version, about = "Train and evaluate project-context code summarizers")]
struct Cli {
    /// run every stage on one thread (bit-exact across machines)
    #[arg(long, global = true)]
    single_thread: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Extract commented subroutines from a tree of projects
    Ingest { src: PathBuf, out: PathBuf },
    /// Train one variant and write its best-validation checkpoint
    Train(TrainArgs),
    /// Greedy-decode summaries for one split
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        decode_len: Option<usize>,
    },
    /// Decode from the mean of several checkpoints' distributions
    Ensemble {
        #[arg(long, value_delimiter = ',', required = true)]
        ckpts: Vec<PathBuf>,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        decode_len: Option<usize>,
    },
    /// Score predictions; with --preds-b also count per-example wins
    Eval {
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        preds_b: Option<PathBuf>,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long)]
        out: PathBuf,
    },
    /// Minutes per epoch and model size from training logs
    Cost {
        #[arg(long, value_delimiter = ',', required = true)]
        logs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    variant: Variant,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = ctxsum::training::DEFAULT_MAX_EPOCHS)]
    epochs: usize,
    /// seeds initialization, context sampling and shuffling
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    e: Option<usize>,
    #[arg(long)]
    v: Option<usize>,
    #[arg(long)]
    w: Option<usize>,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    f: Option<usize>,
    #[arg(long)]
    decode_len: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// epoch log, one JSON object per line
    #[arg(long)]
    log: Option<PathBuf>,
}

impl TrainArgs {
    fn hyper_params(&self) -> HyperParams {
        let d = HyperParams::default();
        HyperParams {
            e: self.e.unwrap_or(d.e),
            v: self.v.unwrap_or(d.v),
            w: self.w.unwrap_or(d.w),
            s: self.s.unwrap_or(d.s),
            f: self.f.unwrap_or(d.f),
            decode_max_len: self.decode_len.unwrap_or(d.decode_max_len),
            batch_size: self.batch.unwrap_or(d.batch_size),
            lr: self.lr.unwrap_or(d.lr),
            select_seed: self.seed,
            init_seed: self.seed,
            ..d
        }
    }
}

fn load_checkpoint(path: &Path, corpus: &Corpus) -> Result<(ModelCheckpoint, Vocab)> {
    let ckpt = ModelCheckpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    let vocab = build_vocab(corpus.split(Split::Train), ckpt.model.config().hp.v)?;
    ckpt.model
        .config()
        .check_vocab(&vocab)
        .with_context(|| format!("{} was trained on a different corpus", path.display()))?;
    Ok((ckpt, vocab))
}

fn split_batches(ckpt: &ModelCheckpoint, corpus: &Corpus, vocab: &Vocab, split: Split) -> Result<Vec<Batch>> {
    let hp = &ckpt.model.config().hp;
    let examples = corpus.split(split);
    if examples.is_empty() {
        bail!("the {split} split is empty");
    }
    Ok(ctxsum::training::batches(&examples, corpus, vocab, hp, ckpt.model.variant())?)
}

fn write_predictions(set: &PredictionSet, out: &Path) -> Result<()> {
    set.save(out)?;
    let back = PredictionSet::load(out)?;
    if &back != set {
        bail!("{} did not read back identically", out.display());
    }
    eprintln!("wrote {} predictions to {}", set.len(), out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Ingest { src, out } => {
            let s = ingest(&src, &out)?;
            load_corpus(&out).context("re-reading the ingested corpus")?;
            println!(
                "{} projects, {} files, {} subroutines -> {}",
                s.projects,
                s.files,
                s.subroutines,
                out.display()
            );
        }
        Cmd::Train(args) => {
            let hp = args.hyper_params();
            hp.validate()?;
            let corpus = load_corpus(&args.corpus)?;
            let vocab = build_vocab(corpus.split(Split::Train), hp.v)?;
            let mut cfg = TrainConfig::new(args.variant, hp);
            cfg.max_epochs = args.epochs;
            cfg.shuffle_seed = args.seed;
            let mut log_file = match &args.log {
                Some(p) => Some(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
                None => None,
            };
            let mut log_err = None;
            let outcome = train(&corpus, &vocab, &cfg, |e: &EpochLog| {
                eprintln!(
                    "{} epoch {:>3}  loss {:.4}  val acc {:.4}  {:.1}s",
                    e.variant.model_name(),
                    e.epoch,
                    e.train_loss,
                    e.val_acc,
                    e.seconds
                );
                if let Some(f) = log_file.as_mut() {
                    let line = serde_json::to_string(e).expect("epoch log serializes");
                    if let Err(err) = writeln!(f, "{line}") {
                        log_err.get_or_insert(err);
                    }
                }
            })?;
            if let Some(err) = log_err {
                return Err(err).context("writing the epoch log");
            }
            outcome.best.save(&args.out)?;
            // optimizer moments are not stored, so compare serialized forms
            if ModelCheckpoint::load(&args.out)?.to_bytes()? != outcome.best.to_bytes()? {
                bail!("{} did not read back identically", args.out.display());
            }
            eprintln!(
                "best epoch {} (val acc {:.4}) -> {}",
                outcome.best.meta.epoch,
                outcome.best.meta.val_acc,
                args.out.display()
            );
        }
        Cmd::Predict {
            ckpt,
            corpus,
            split,
            out,
            decode_len,
        } => {
            let corpus = load_corpus(&corpus)?;
            let (ckpt, vocab) = load_checkpoint(&ckpt, &corpus)?;
            let max_len = decode_len.unwrap_or(ckpt.model.config().hp.decode_max_len);
            let mut set = PredictionSet::new(ckpt.model.variant().model_name());
            for batch in split_batches(&ckpt, &corpus, &vocab, split)? {
                let summaries = decode_greedy(&ckpt.model, &batch, &vocab, max_len)?;
                for (id, s) in batch.ids.iter().zip(summaries) {
                    set.insert(id.clone(), s);
                }
            }
            write_predictions(&set, &out)?;
        }
        Cmd::Ensemble {
            ckpts,
            corpus,
            split,
            out,
            decode_len,
        } => {
            let corpus = load_corpus(&corpus)?;
            let mut members = Vec::new();
            for path in &ckpts {
                members.push(load_checkpoint(path, &corpus)?);
            }
            let vocab = &members[0].1;
            if let Some((_, v)) = members.iter().find(|(_, v)| v.fingerprint() != vocab.fingerprint()) {
                bail!("ensemble members disagree on vocabulary ({} vs {})", vocab.fingerprint(), v.fingerprint());
            }
            let max_len = decode_len.unwrap_or(members[0].0.model.config().hp.decode_max_len);
            let per_member: Vec<Vec<Batch>> = members
                .iter()
                .map(|(c, v)| split_batches(c, &corpus, v, split))
                .collect::<Result<_>>()?;
            let name = members
                .iter()
                .map(|(c, _)| c.model.variant().model_name())
                .collect::<Vec<_>>()
                .join("+");
            let mut set = PredictionSet::new(format!("ensemble({name})"));
            // members may batch differently; decode one example at a time when they do
            let aligned = per_member.iter().all(|b| b.len() == per_member[0].len())
                && (0..per_member[0].len()).all(|i| per_member.iter().all(|b| b[i].ids == per_member[0][i].ids));
            if aligned {
                for i in 0..per_member[0].len() {
                    let group: Vec<(&dyn Decodable, &Batch)> =
                        members.iter().zip(&per_member).map(|((c, _), b)| (&c.model as &dyn Decodable, &b[i])).collect();
                    let summaries = ensemble_decode(&group, vocab, max_len)?;
                    for (id, s) in per_member[0][i].ids.iter().zip(summaries) {
                        set.insert(id.clone(), s);
                    }
                }
            } else {
                let examples = corpus.split(split);
                for ex in examples {
                    let singles: Vec<Batch> = members
                        .iter()
                        .map(|(c, v)| make_batch(&[ex], &corpus, v, &c.model.config().hp, c.model.variant()))
                        .collect::<ctxsum::Result<_>>()?;
                    let group: Vec<(&dyn Decodable, &Batch)> =
                        members.iter().zip(&singles).map(|((c, _), b)| (&c.model as &dyn Decodable, b)).collect();
                    let mut summaries = ensemble_decode(&group, vocab, max_len)?;
                    set.insert(ex.id.clone(), summaries.remove(0));
                }
            }
            write_predictions(&set, &out)?;
        }
        Cmd::Eval {
            preds,
            preds_b,
            corpus,
            split,
            out,
        } => {
            let corpus = load_corpus(&corpus)?;
            let refs = references(&corpus, split);
            let a = PredictionSet::load(&preds)?;
            let b = preds_b.as_deref().map(PredictionSet::load).transpose()?;
            let report = evaluate(&a, b.as_ref(), &refs)?;
            let json = serde_json::to_string_pretty(&report)?;
            fs::write(&out, json).with_context(|| format!("writing {}", out.display()))?;
            print!("{}", report.render());
        }
        Cmd::Cost { logs, out } => {
            let mut entries = Vec::new();
            for path in &logs {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                    let e: EpochLog =
                        serde_json::from_str(line).with_context(|| format!("{}:{}", path.display(), n + 1))?;
                    entries.push(e);
                }
            }
            let rows = report_cost(&entries)?;
            if let Some(out) = out {
                fs::write(&out, serde_json::to_string_pretty(&rows)?)
                    .with_context(|| format!("writing {}", out.display()))?;
            }
            print!("{}", render_cost_table(&rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.single_thread {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(1).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
