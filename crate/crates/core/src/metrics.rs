//! Edit-distance scoring: word, character and bit error rates.
//!
//! Rates are pooled over the corpus (total edits over total reference
//! length), so they may exceed 1 when hypotheses are longer than the
//! references.

use crate::error::{Error, Result};
use crate::text::normalize_transcript;

/// Unit-cost Levenshtein distance.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = diag + usize::from(x != y);
            diag = row[j + 1];
            row[j + 1] = sub.min(row[j] + 1).min(diag + 1);
        }
    }
    row[b.len()]
}

/// Edit counts for a single reference/hypothesis pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PairScore {
    pub word_edits: usize,
    pub ref_words: usize,
    pub char_edits: usize,
    pub ref_chars: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreReport {
    pub wer: f64,
    pub cer: f64,
    pub pairs: Vec<PairScore>,
}

pub fn score_pair(reference: &str, hypothesis: &str) -> PairScore {
    let r = normalize_transcript(reference);
    let h = normalize_transcript(hypothesis);
    let rw: Vec<&str> = r.split_whitespace().collect();
    let hw: Vec<&str> = h.split_whitespace().collect();
    let rc: Vec<char> = r.chars().collect();
    let hc: Vec<char> = h.chars().collect();
    PairScore {
        word_edits: levenshtein(&rw, &hw),
        ref_words: rw.len(),
        char_edits: levenshtein(&rc, &hc),
        ref_chars: rc.len(),
    }
}

/// Scores a corpus of (reference, hypothesis) pairs.
pub fn score<R: AsRef<str>, H: AsRef<str>>(refs: &[R], hyps: &[H]) -> Result<ScoreReport> {
    if refs.len() != hyps.len() {
        return Err(Error::invalid(format!(
            "{} references but {} hypotheses",
            refs.len(),
            hyps.len()
        )));
    }
    let pairs: Vec<PairScore> = refs
        .iter()
        .zip(hyps)
        .map(|(r, h)| score_pair(r.as_ref(), h.as_ref()))
        .collect();
    let total = |f: fn(&PairScore) -> usize| pairs.iter().map(f).sum::<usize>();
    let (ref_words, ref_chars) = (total(|p| p.ref_words), total(|p| p.ref_chars));
    if ref_words == 0 || ref_chars == 0 {
        return Err(Error::UndefinedRate);
    }
    Ok(ScoreReport {
        wer: total(|p| p.word_edits) as f64 / ref_words as f64,
        cer: total(|p| p.char_edits) as f64 / ref_chars as f64,
        pairs,
    })
}

pub fn wer<R: AsRef<str>, H: AsRef<str>>(refs: &[R], hyps: &[H]) -> Result<f64> {
    score(refs, hyps).map(|s| s.wer)
}

pub fn cer<R: AsRef<str>, H: AsRef<str>>(refs: &[R], hyps: &[H]) -> Result<f64> {
    score(refs, hyps).map(|s| s.cer)
}

/// Character error rate of a single hypothesis against one reference.
pub fn pair_cer(reference: &str, hypothesis: &str) -> f64 {
    let p = score_pair(reference, hypothesis);
    if p.ref_chars == 0 {
        return if p.char_edits == 0 { 0.0 } else { f64::INFINITY };
    }
    p.char_edits as f64 / p.ref_chars as f64
}

/// Fraction of differing bits.
pub fn ber(a: &[bool], b: &[bool]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "bit strings differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::invalid("bit strings are empty"));
    }
    let flips = a.iter().zip(b).filter(|(x, y)| x != y).count();
    Ok(flips as f64 / a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chars(s: &str) -> Vec<char> {
        s.chars().collect()
    }

    #[test]
    fn levenshtein_examples() {
        assert_eq!(levenshtein(&chars("abc"), &chars("abc")), 0);
        assert_eq!(levenshtein(&chars("abc"), &chars("axc")), 1);
        assert_eq!(levenshtein(&chars(""), &chars("xyz")), 3);
        assert_eq!(levenshtein(&chars("kitten"), &chars("sitting")), 3);
    }

    #[test]
    fn rate_examples() {
        let refs = ["the cat sat"];
        assert_eq!(wer(&refs, &refs).unwrap(), 0.0);
        assert_eq!(cer(&refs, &refs).unwrap(), 0.0);
        let s = score(&refs, &["the hat sat"]).unwrap();
        assert!((s.wer - 1.0 / 3.0).abs() < 1e-15);
        assert!((s.cer - 1.0 / 11.0).abs() < 1e-15);
        // every word replaced by an unrelated one of equal count
        assert_eq!(wer(&["alpha beta"], &["zzz qqq"]).unwrap(), 1.0);
    }

    #[test]
    fn pooling_and_normalization() {
        let s = score(&["a b", "c d e f"], &["a x", "c d e f"]).unwrap();
        assert!((s.wer - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(wer(&["The  CAT"], &["the cat!"]).unwrap(), 0.0);
        // insertions can push the rate above one
        assert!(wer(&["a"], &["b c d"]).unwrap() > 1.0);
    }

    #[test]
    fn rate_errors() {
        assert!(matches!(wer(&["", " !"], &["a", "b"]), Err(Error::UndefinedRate)));
        assert!(matches!(wer::<&str, &str>(&[], &[]), Err(Error::UndefinedRate)));
        assert!(wer(&["a"], &["a", "b"]).is_err());
    }

    #[test]
    fn ber_examples() {
        let m: Vec<bool> = (0..20).map(|i| i % 3 == 0).collect();
        assert_eq!(ber(&m, &m).unwrap(), 0.0);
        assert_eq!(ber(&[false; 20], &[true; 20]).unwrap(), 1.0);
        let mut flipped = m.clone();
        flipped[7] = !flipped[7];
        assert!((ber(&m, &flipped).unwrap() - 0.05).abs() < 1e-15);
        assert!(ber(&m, &m[..19]).is_err());
    }

    proptest! {
        #[test]
        fn metric_axioms(a in "[abc]{0,8}", b in "[abc]{0,8}", c in "[abc]{0,8}") {
            let (a, b, c) = (chars(&a), chars(&b), chars(&c));
            let ab = levenshtein(&a, &b);
            prop_assert_eq!(ab, levenshtein(&b, &a));
            prop_assert_eq!(ab == 0, a == b);
            prop_assert!(ab <= levenshtein(&a, &c) + levenshtein(&c, &b));
            prop_assert!(ab >= a.len().abs_diff(b.len()));
            prop_assert!(ab <= a.len().max(b.len()));
        }
    }
}
