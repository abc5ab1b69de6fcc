//! Action-word scoring: the action word of a summary is its first token.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const OTHER: &str = "<other>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Grouping {
    #[serde(rename = "top-40")]
    Top40,
    #[serde(rename = "top-10")]
    Top10,
    /// ranks 2 through 12, leaving out `get` and `set`
    #[serde(rename = "top-10n")]
    Top10n,
    #[serde(rename = "get/set")]
    GetSet,
}

impl Grouping {
    pub const ALL: [Grouping; 4] = [Grouping::Top40, Grouping::Top10, Grouping::Top10n, Grouping::GetSet];
}

impl fmt::Display for Grouping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Grouping::Top40 => "top-40",
            Grouping::Top10 => "top-10",
            Grouping::Top10n => "top-10n",
            Grouping::GetSet => "get/set",
        })
    }
}

impl FromStr for Grouping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Grouping::ALL
            .into_iter()
            .find(|g| g.to_string() == s)
            .ok_or_else(|| Error::invalid(format!("unknown grouping `{s}`")))
    }
}

pub fn action_word(summary: &[String]) -> Option<&str> {
    summary.first().map(String::as_str)
}

/// Gold action words by descending frequency, ties in lexicographic order.
pub fn rank_action_words(references: &[&[String]]) -> Result<Vec<(String, usize)>> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for r in references {
        let w = action_word(r).ok_or_else(|| Error::invalid("a reference summary is empty"))?;
        *counts.entry(w).or_default() += 1;
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().map(|(w, c)| (w.to_string(), c)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(ranked)
}

/// The words a grouping scores, drawn from the gold ranking.
pub fn group_words(ranking: &[(String, usize)], grouping: Grouping) -> Vec<String> {
    let words = ranking.iter().map(|(w, _)| w.clone());
    match grouping {
        Grouping::Top40 => words.take(40).collect(),
        Grouping::Top10 => words.take(10).collect(),
        Grouping::Top10n => words.take(12).skip(1).filter(|w| w != "get" && w != "set").collect(),
        Grouping::GetSet => words.filter(|w| w == "get" || w == "set").collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordScore {
    pub word: String,
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionScores {
    pub grouping: Grouping,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub words: Vec<WordScore>,
}

/// Per-word precision and recall of predicted action words, macro-averaged
/// over the grouping. A word never predicted has precision 0; an empty
/// prediction is wrong for its gold word.
pub fn action_word_metrics(pairs: &[(&[String], &[String])], grouping: Grouping) -> Result<ActionScores> {
    let refs: Vec<&[String]> = pairs.iter().map(|(_, r)| *r).collect();
    let ranking = rank_action_words(&refs)?;
    let words = group_words(&ranking, grouping);
    if words.is_empty() {
        return Err(Error::invalid(format!("no gold action words fall in grouping {grouping}")));
    }
    let mut gold: HashMap<&str, usize> = HashMap::new();
    let mut predicted: HashMap<&str, usize> = HashMap::new();
    let mut correct: HashMap<&str, usize> = HashMap::new();
    for (cand, reference) in pairs {
        let g = action_word(reference).expect("checked by ranking");
        *gold.entry(g).or_default() += 1;
        if let Some(p) = action_word(cand) {
            *predicted.entry(p).or_default() += 1;
            if p == g {
                *correct.entry(p).or_default() += 1;
            }
        }
    }
    let scores: Vec<WordScore> = words
        .iter()
        .map(|w| {
            let (g, p, c) = (
                gold.get(w.as_str()).copied().unwrap_or(0),
                predicted.get(w.as_str()).copied().unwrap_or(0),
                correct.get(w.as_str()).copied().unwrap_or(0),
            );
            WordScore {
                word: w.clone(),
                gold: g,
                predicted: p,
                correct: c,
                precision: if p == 0 { 0.0 } else { c as f64 / p as f64 },
                recall: c as f64 / g as f64,
            }
        })
        .collect();
    let n = scores.len() as f64;
    Ok(ActionScores {
        grouping,
        macro_precision: scores.iter().map(|s| s.precision).sum::<f64>() / n,
        macro_recall: scores.iter().map(|s| s.recall).sum::<f64>() / n,
        words: scores,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// the word set followed by [`OTHER`]
    pub labels: Vec<String>,
    /// `counts[gold][predicted]`
    pub counts: Vec<Vec<usize>>,
}

/// Gold action word (rows) against predicted action word (columns); words
/// outside `words`, and empty predictions, land in the [`OTHER`] bucket.
pub fn confusion_matrix(pairs: &[(&[String], &[String])], words: &[String]) -> Result<ConfusionMatrix> {
    if words.is_empty() {
        return Err(Error::invalid("confusion matrix needs a nonempty word set"));
    }
    let mut labels: Vec<String> = Vec::with_capacity(words.len() + 1);
    for w in words {
        if !labels.contains(w) {
            labels.push(w.clone());
        }
    }
    labels.push(OTHER.to_string());
    let index: BTreeMap<&str, usize> = labels[..labels.len() - 1].iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
    let other = labels.len() - 1;
    let slot = |w: Option<&str>| w.and_then(|w| index.get(w).copied()).unwrap_or(other);
    let mut counts = vec![vec![0; labels.len()]; labels.len()];
    for (cand, reference) in pairs {
        counts[slot(action_word(reference))][slot(action_word(cand))] += 1;
    }
    Ok(ConfusionMatrix { labels, counts })
}
