use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean per-sentence ROUGE-LCS, ×100.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rouge {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// P, R and F (β = 1) for one pair, each in [0, 1].
pub fn sentence_rouge(candidate: &[String], reference: &[String]) -> (f64, f64, f64) {
    let lcs = lcs_len(candidate, reference) as f64;
    let p = if candidate.is_empty() { 0.0 } else { lcs / candidate.len() as f64 };
    let r = if reference.is_empty() { 0.0 } else { lcs / reference.len() as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

pub fn rouge_lcs(pairs: &[(&[String], &[String])]) -> Result<Rouge> {
    if pairs.is_empty() {
        return Err(Error::invalid("ROUGE needs at least one prediction"));
    }
    let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
    for (cand, reference) in pairs {
        let (sp, sr, sf) = sentence_rouge(cand, reference);
        p += sp;
        r += sr;
        f += sf;
    }
    let n = pairs.len() as f64;
    Ok(Rouge {
        precision: 100.0 * p / n,
        recall: 100.0 * r / n,
        f1: 100.0 * f / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(text: &str) -> Vec<String> {
        text.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn lcs_cases() {
        let (a, b) = (s("a b c d"), s("a c d"));
        assert_eq!(lcs_len(&a, &b), 3);
        let r = rouge_lcs(&[(&a, &b)]).unwrap();
        assert_eq!(r.recall, 100.0);
        assert_eq!(r.precision, 75.0);
        assert!((r.f1 - 600.0 / 7.0).abs() < 1e-9);

        let same = rouge_lcs(&[(&a, &a)]).unwrap();
        assert_eq!((same.precision, same.recall, same.f1), (100.0, 100.0, 100.0));

        let none = rouge_lcs(&[(&s("x y"), &s("a b"))]).unwrap();
        assert_eq!((none.precision, none.recall, none.f1), (0.0, 0.0, 0.0));
        assert!(rouge_lcs(&[]).is_err());
    }

    /// Exponential reference: the longest common subsequence by subsets.
    fn brute_lcs(a: &[String], b: &[String]) -> usize {
        (0u32..1 << a.len())
            .filter_map(|bits| {
                let sub: Vec<&String> = a.iter().enumerate().filter(|(i, _)| bits >> i & 1 == 1).map(|(_, x)| x).collect();
                let mut it = b.iter();
                sub.iter().all(|x| it.any(|y| y == *x)).then_some(sub.len())
            })
            .max()
            .unwrap_or(0)
    }

    proptest! {
        #[test]
        fn lcs_matches_brute_force(a in proptest::collection::vec("[a-c]", 0..8), b in proptest::collection::vec("[a-c]", 0..8)) {
            prop_assert_eq!(lcs_len(&a, &b), brute_lcs(&a, &b));
        }

        #[test]
        fn f1_zero_iff_no_overlap(pairs in proptest::collection::vec(
            (proptest::collection::vec("[a-f]", 1..5), proptest::collection::vec("[a-f]", 1..5)), 1..5)) {
            let refs: Vec<(&[String], &[String])> = pairs.iter().map(|(c, r)| (c.as_slice(), r.as_slice())).collect();
            let score = rouge_lcs(&refs).unwrap();
            let all_zero = pairs.iter().all(|(c, r)| lcs_len(c, r) == 0);
            prop_assert_eq!(score.f1 == 0.0, all_zero);
            prop_assert!(score.f1 <= 100.0 + 1e-9);
        }
    }
}
