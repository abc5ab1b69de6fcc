//! Summary metrics: corpus BLEU, ROUGE-LCS, action-word scores and
//! head-to-head comparison of two prediction sets.

mod action;
mod bleu;
mod rouge;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Split};
use crate::error::{Error, Result};

pub use action::{
    action_word, action_word_metrics, confusion_matrix, group_words, rank_action_words, ActionScores, ConfusionMatrix,
    Grouping, WordScore, OTHER,
};
pub use bleu::{corpus_bleu, sentence_bleu, Bleu, MAX_ORDER};
pub use rouge::{lcs_len, rouge_lcs, sentence_rouge, Rouge};

/// Sentences within this much sentence BLEU count as a tie.
pub const TIE_EPSILON: f64 = 1e-9;

/// Gold summaries by subroutine id.
pub type References = BTreeMap<String, Vec<String>>;

pub fn references(corpus: &Corpus, split: Split) -> References {
    corpus
        .split(split)
        .into_iter()
        .map(|s| (s.id.clone(), s.summary_tokens.clone()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PredictionLine {
    id: String,
    tokens: Vec<String>,
    model: String,
}

/// Predicted summaries from one model or ensemble, keyed by subroutine id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionSet {
    pub model: String,
    pub predictions: BTreeMap<String, Vec<String>>,
}

impl PredictionSet {
    pub fn new(model: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            predictions: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, id: impl Into<String>, tokens: Vec<String>) {
        self.predictions.insert(id.into(), tokens);
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    /// Errors unless every id has a reference.
    pub fn check_against(&self, refs: &References) -> Result<()> {
        if self.is_empty() {
            return Err(Error::invalid(format!("prediction set `{}` is empty", self.model)));
        }
        match self.predictions.keys().find(|id| !refs.contains_key(*id)) {
            Some(id) => Err(Error::invalid(format!("prediction for `{id}` has no reference"))),
            None => Ok(()),
        }
    }

    /// One JSON object per line: `{"id", "tokens", "model"}`, in id order.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for (id, tokens) in &self.predictions {
            let line = PredictionLine {
                id: id.clone(),
                tokens: tokens.clone(),
                model: self.model.clone(),
            };
            out.push_str(&serde_json::to_string(&line)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut set = PredictionSet::default();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let p: PredictionLine =
                serde_json::from_str(line).map_err(|e| Error::record(format!("line {}", n + 1), e.to_string()))?;
            if set.predictions.is_empty() {
                set.model = p.model.clone();
            } else if p.model != set.model {
                return Err(Error::record(
                    format!("line {}", n + 1),
                    format!("model `{}` differs from `{}`", p.model, set.model),
                ));
            }
            if set.predictions.insert(p.id.clone(), p.tokens).is_some() {
                return Err(Error::record(p.id, "duplicate prediction id"));
            }
        }
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl()?.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut text = String::new();
        for line in BufReader::new(f).lines() {
            text.push_str(&line.map_err(|e| Error::io(path, e))?);
            text.push('\n');
        }
        Self::from_jsonl(&text)
    }

    fn pairs<'a>(&'a self, refs: &'a References) -> Vec<(&'a [String], &'a [String])> {
        self.predictions
            .iter()
            .map(|(id, p)| (p.as_slice(), refs[id].as_slice()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comparison {
    pub wins_a: usize,
    pub wins_b: usize,
    pub ties: usize,
}

impl Comparison {
    pub fn total(&self) -> usize {
        self.wins_a + self.wins_b + self.ties
    }
}

/// Sentence BLEU of A against B on every id both sets predicted.
pub fn per_method_comparison(a: &PredictionSet, b: &PredictionSet, refs: &References) -> Result<Comparison> {
    let mut out = Comparison {
        wins_a: 0,
        wins_b: 0,
        ties: 0,
    };
    for (id, pa) in &a.predictions {
        let (Some(pb), Some(r)) = (b.predictions.get(id), refs.get(id)) else {
            continue;
        };
        let (sa, sb) = (sentence_bleu(pa, r), sentence_bleu(pb, r));
        if (sa - sb).abs() <= TIE_EPSILON {
            out.ties += 1;
        } else if sa > sb {
            out.wins_a += 1;
        } else {
            out.wins_b += 1;
        }
    }
    if out.total() == 0 {
        return Err(Error::invalid("the two prediction sets share no scored ids"));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceScore {
    pub id: String,
    pub bleu: f64,
    pub rouge_f1: f64,
    /// sentence BLEU of the second prediction set, when one was given
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bleu_b: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub examples: usize,
    pub bleu: Bleu,
    pub rouge: Rouge,
    /// `None` where no gold action word falls in the grouping
    pub action_words: BTreeMap<Grouping, Option<ActionScores>>,
    pub confusion: ConfusionMatrix,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub model_b: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub comparison: Option<Comparison>,
    pub sentences: Vec<SentenceScore>,
}

/// Scores `preds` against `refs`, and head-to-head against `preds_b` if
/// given. The confusion matrix covers the top-10 gold action words.
pub fn evaluate(preds: &PredictionSet, preds_b: Option<&PredictionSet>, refs: &References) -> Result<EvalReport> {
    preds.check_against(refs)?;
    let pairs = preds.pairs(refs);
    let bleu = corpus_bleu(&pairs)?;
    let rouge = rouge_lcs(&pairs)?;
    let mut action_words = BTreeMap::new();
    for g in Grouping::ALL {
        let scores = match action_word_metrics(&pairs, g) {
            Ok(s) => Some(s),
            Err(Error::Invalid(_)) if g != Grouping::Top40 => None,
            Err(e) => return Err(e),
        };
        action_words.insert(g, scores);
    }
    let gold: Vec<&[String]> = pairs.iter().map(|(_, r)| *r).collect();
    let top = group_words(&rank_action_words(&gold)?, Grouping::Top10);
    let confusion = confusion_matrix(&pairs, &top)?;

    let comparison = match preds_b {
        Some(b) => {
            b.check_against(refs)?;
            Some(per_method_comparison(preds, b, refs)?)
        }
        None => None,
    };
    let sentences = preds
        .predictions
        .iter()
        .map(|(id, p)| {
            let r = &refs[id];
            SentenceScore {
                id: id.clone(),
                bleu: sentence_bleu(p, r),
                rouge_f1: 100.0 * sentence_rouge(p, r).2,
                bleu_b: preds_b.and_then(|b| b.predictions.get(id)).map(|pb| sentence_bleu(pb, r)),
            }
        })
        .collect();
    Ok(EvalReport {
        model: preds.model.clone(),
        examples: preds.len(),
        bleu,
        rouge,
        action_words,
        confusion,
        model_b: preds_b.map(|b| b.model.clone()),
        comparison,
        sentences,
    })
}

impl EvalReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "model: {}  ({} examples)", self.model, self.examples);
        let p = &self.bleu.precisions;
        let _ = writeln!(
            out,
            "BLEU {:.2}  (B1 {:.2}  B2 {:.2}  B3 {:.2}  B4 {:.2}  BP {:.3})",
            self.bleu.score, p[0], p[1], p[2], p[3], self.bleu.brevity_penalty
        );
        let _ = writeln!(
            out,
            "ROUGE-LCS  P {:.2}  R {:.2}  F1 {:.2}",
            self.rouge.precision, self.rouge.recall, self.rouge.f1
        );
        let _ = writeln!(out, "\n{:<10} {:>10} {:>10} {:>6}", "action", "precision", "recall", "words");
        for (g, s) in &self.action_words {
            match s {
                Some(s) => {
                    let _ = writeln!(
                        out,
                        "{:<10} {:>10.3} {:>10.3} {:>6}",
                        g.to_string(),
                        s.macro_precision,
                        s.macro_recall,
                        s.words.len()
                    );
                }
                None => {
                    let _ = writeln!(out, "{:<10} {:>10} {:>10} {:>6}", g.to_string(), "-", "-", 0);
                }
            }
        }
        let _ = writeln!(out, "\nconfusion (rows gold, columns predicted):");
        let width = self.confusion.labels.iter().map(String::len).max().unwrap_or(4).max(4);
        let _ = write!(out, "{:<width$}", "");
        for l in &self.confusion.labels {
            let _ = write!(out, " {l:>width$}");
        }
        out.push('\n');
        for (l, row) in self.confusion.labels.iter().zip(&self.confusion.counts) {
            let _ = write!(out, "{l:<width$}");
            for c in row {
                let _ = write!(out, " {c:>width$}");
            }
            out.push('\n');
        }
        if let (Some(c), Some(b)) = (&self.comparison, &self.model_b) {
            let _ = writeln!(
                out,
                "\n{} wins {}, {} wins {}, ties {}",
                self.model, c.wins_a, b, c.wins_b, c.ties
            );
        }
        out
    }
}
