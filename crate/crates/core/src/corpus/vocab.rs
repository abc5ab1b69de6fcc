use std::collections::{BTreeMap, HashMap};

use sha2::{Digest, Sha256};

use super::Subroutine;
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const OOV: usize = 1;
pub const START: usize = 2;
pub const END: usize = 3;

pub const SPECIALS: [&str; 4] = ["<pad>", "<oov>", "<s>", "</s>"];

/// Word↔index mapping shared by code, summaries and context.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
    freqs: BTreeMap<String, u64>,
}

impl Vocab {
    /// Keeps the `cap` most frequent words (ties broken lexicographically)
    /// after the four reserved tokens.
    pub fn from_counts(freqs: BTreeMap<String, u64>, cap: usize) -> Self {
        let mut ranked: Vec<(&String, &u64)> = freqs.iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
        let mut words: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        words.extend(ranked.into_iter().take(cap).map(|(w, _)| w.clone()));
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Self { words, index, freqs }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn frequency(&self, word: &str) -> u64 {
        self.freqs.get(word).copied().unwrap_or(0)
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(OOV)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn word(&self, id: usize) -> &str {
        self.words.get(id).map_or(SPECIALS[OOV], String::as_str)
    }

    /// Hex SHA-256 over the index→word list; equal fingerprints mean equal
    /// index assignments.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for w in &self.words {
            h.update(w.as_bytes());
            h.update([0u8]);
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Maps tokens to indices, optionally wrapped in START/END, truncated to
    /// `target_len` and right-padded with PAD. The mask is false on padding.
    pub fn encode(&self, tokens: &[String], target_len: usize, add_start_end: bool) -> (Vec<usize>, Vec<bool>) {
        let mut ids = Vec::with_capacity(target_len);
        if add_start_end {
            ids.push(START);
        }
        ids.extend(tokens.iter().map(|t| self.id(t)));
        if add_start_end {
            ids.push(END);
        }
        ids.truncate(target_len);
        let mut mask = vec![true; ids.len()];
        ids.resize(target_len, PAD);
        mask.resize(target_len, false);
        (ids, mask)
    }

    /// Words for `ids`, skipping PAD.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .filter(|&&i| i != PAD)
            .map(|&i| self.word(i).to_string())
            .collect()
    }
}

/// Builds the vocabulary from training subroutines, counting code and
/// summary tokens together.
pub fn build_vocab<'a>(train: impl IntoIterator<Item = &'a Subroutine>, cap: usize) -> Result<Vocab> {
    let mut freqs: BTreeMap<String, u64> = BTreeMap::new();
    let mut seen = 0usize;
    for sub in train {
        seen += 1;
        for t in sub.code_tokens.iter().chain(&sub.summary_tokens) {
            *freqs.entry(t.clone()).or_default() += 1;
        }
    }
    if seen == 0 {
        return Err(Error::invalid("cannot build a vocabulary from an empty training split"));
    }
    Ok(Vocab::from_counts(freqs, cap))
}
