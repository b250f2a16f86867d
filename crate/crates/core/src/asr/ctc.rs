//! CTC loss by the forward-backward recursions, and greedy decoding.
//!
//! Both work on a row-major `frames x classes` matrix of per-frame log
//! probabilities. The loss gradient is taken with respect to those log
//! probabilities treated as free inputs, so it equals minus the posterior
//! occupancy of each (frame, class) cell.

use crate::asr::vocab::Vocab;
use crate::error::{Error, Result};
use crate::scalar::{log_add, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct CtcOutput<T> {
    /// Negative log likelihood; `+inf` when no alignment exists.
    pub loss: T,
    /// `d loss / d log_probs`, same layout as the input.
    pub grad: Vec<T>,
    pub feasible: bool,
}

/// Minimum number of frames able to emit `target` (repeats need a blank between them).
pub fn min_frames<L: PartialEq>(target: &[L]) -> usize {
    target.len() + target.windows(2).filter(|w| w[0] == w[1]).count()
}

pub fn ctc_loss<T: Real>(log_probs: &[T], classes: usize, target: &[usize], blank: usize) -> Result<CtcOutput<T>> {
    if classes == 0 || log_probs.is_empty() || !log_probs.len().is_multiple_of(classes) {
        return Err(Error::invalid(format!(
            "log-prob matrix of {} values is not a whole number of {classes}-class rows",
            log_probs.len()
        )));
    }
    if blank >= classes {
        return Err(Error::invalid("blank index outside the class range"));
    }
    if let Some(&bad) = target.iter().find(|&&c| c >= classes || c == blank) {
        return Err(Error::invalid(format!("target label {bad} is blank or out of range")));
    }
    let frames = log_probs.len() / classes;
    let zero_grad = || vec![T::zero(); log_probs.len()];
    if frames < min_frames(target) {
        return Ok(CtcOutput {
            loss: T::infinity(),
            grad: zero_grad(),
            feasible: false,
        });
    }

    // blank-extended target: b l1 b l2 ... lL b
    let ext: Vec<usize> = std::iter::once(blank)
        .chain(target.iter().flat_map(|&c| [c, blank]))
        .collect();
    let states = ext.len();
    let lp = |t: usize, c: usize| log_probs[t * classes + c];
    let skip_allowed = |s: usize, other: usize| ext[s] != blank && ext[s] != ext[other];
    let neg_inf = T::neg_infinity();

    let mut alpha = vec![neg_inf; frames * states];
    alpha[0] = lp(0, ext[0]);
    if states > 1 {
        alpha[1] = lp(0, ext[1]);
    }
    for t in 1..frames {
        let (prev, cur) = alpha.split_at_mut(t * states);
        let prev = &prev[(t - 1) * states..];
        for s in 0..states {
            let mut acc = prev[s];
            if s >= 1 {
                acc = log_add(acc, prev[s - 1]);
            }
            if s >= 2 && skip_allowed(s, s - 2) {
                acc = log_add(acc, prev[s - 2]);
            }
            cur[s] = if acc == neg_inf { neg_inf } else { acc + lp(t, ext[s]) };
        }
    }

    let mut beta = vec![neg_inf; frames * states];
    let last = (frames - 1) * states;
    beta[last + states - 1] = lp(frames - 1, ext[states - 1]);
    if states > 1 {
        beta[last + states - 2] = lp(frames - 1, ext[states - 2]);
    }
    for t in (0..frames - 1).rev() {
        let (cur, next) = beta.split_at_mut((t + 1) * states);
        let cur = &mut cur[t * states..];
        for s in 0..states {
            let mut acc = next[s];
            if s + 1 < states {
                acc = log_add(acc, next[s + 1]);
            }
            if s + 2 < states && skip_allowed(s, s + 2) {
                acc = log_add(acc, next[s + 2]);
            }
            cur[s] = if acc == neg_inf { neg_inf } else { acc + lp(t, ext[s]) };
        }
    }

    let tail = &alpha[last..];
    let log_likelihood = if states > 1 {
        log_add(tail[states - 1], tail[states - 2])
    } else {
        tail[0]
    };
    if !log_likelihood.is_finite() {
        return Ok(CtcOutput {
            loss: T::infinity(),
            grad: zero_grad(),
            feasible: false,
        });
    }

    let mut grad = zero_grad();
    for t in 0..frames {
        for s in 0..states {
            let (a, b) = (alpha[t * states + s], beta[t * states + s]);
            if a == neg_inf || b == neg_inf {
                continue;
            }
            let c = ext[s];
            grad[t * classes + c] -= (a + b - lp(t, c) - log_likelihood).exp();
        }
    }
    Ok(CtcOutput {
        loss: -log_likelihood,
        grad,
        feasible: true,
    })
}

/// Per-frame argmax (ties to the lowest class), repeats collapsed, blanks removed.
pub fn greedy_labels<T: Real>(log_probs: &[T], classes: usize, blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for row in log_probs.chunks_exact(classes) {
        let best = row
            .iter()
            .enumerate()
            .fold((0, row[0]), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
            .0;
        if Some(best) != prev && best != blank {
            out.push(best);
        }
        prev = Some(best);
    }
    out
}

pub fn greedy_decode<T: Real>(log_probs: &[T], vocab: &Vocab) -> String {
    vocab.decode(&greedy_labels(log_probs, vocab.num_classes(), vocab.blank()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::log_sum_exp;

    /// Sum over every frame-level path that collapses to `target`.
    fn brute_force_nll(lp: &[f64], classes: usize, target: &[usize], blank: usize) -> f64 {
        let frames = lp.len() / classes;
        let mut terms = Vec::new();
        let total = classes.pow(frames as u32);
        for code in 0..total {
            let mut c = code;
            let path: Vec<usize> = (0..frames)
                .map(|_| {
                    let v = c % classes;
                    c /= classes;
                    v
                })
                .collect();
            let mut collapsed = Vec::new();
            let mut prev = None;
            for &p in &path {
                if Some(p) != prev && p != blank {
                    collapsed.push(p);
                }
                prev = Some(p);
            }
            if collapsed == target {
                terms.push(path.iter().enumerate().map(|(t, &p)| lp[t * classes + p]).sum());
            }
        }
        -log_sum_exp(&terms)
    }

    fn log_softmax_rows(raw: &[f64], classes: usize) -> Vec<f64> {
        raw.chunks(classes)
            .flat_map(|r| {
                let z = log_sum_exp(r);
                r.iter().map(move |v| v - z)
            })
            .collect()
    }

    #[test]
    fn single_frame_single_label() {
        let p: f64 = 0.3;
        let lp = [p.ln(), (1.0 - p).ln()];
        let out = ctc_loss(&lp, 2, &[0], 1).unwrap();
        assert!((out.loss + p.ln()).abs() < 1e-12);
    }

    #[test]
    fn two_uniform_frames() {
        let h = 0.5f64.ln();
        let out = ctc_loss(&[h, h, h, h], 2, &[0], 1).unwrap();
        assert!((out.loss + 0.75f64.ln()).abs() < 1e-12);
        // occupancies: each frame emits 'a' on 2 of the 3 paths
        assert!((out.grad[0] + 2.0 / 3.0).abs() < 1e-12);
        assert!((out.grad[1] + 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_targets() {
        let lp = [0.5f64.ln(); 3];
        let out = ctc_loss(&lp, 3, &[0, 1], 2).unwrap();
        assert!(!out.feasible && out.loss == f64::INFINITY);
        assert!(out.grad.iter().all(|&g| g == 0.0));
        // a repeat needs a separating blank
        let lp = [0.5f64.ln(); 6];
        assert!(!ctc_loss(&lp, 3, &[0, 0], 2).unwrap().feasible);
        assert_eq!(min_frames(&[0, 0, 1, 1, 1]), 8);
    }

    #[test]
    fn empty_target_is_all_blank() {
        let lp = log_softmax_rows(&[0.1, 0.7, -0.3, 0.2], 2);
        let out = ctc_loss(&lp, 2, &[], 1).unwrap();
        assert!((out.loss + lp[1] + lp[3]).abs() < 1e-12);
    }

    #[test]
    fn input_validation() {
        assert!(ctc_loss(&[0.0f64; 5], 2, &[0], 1).is_err());
        assert!(ctc_loss(&[0.0f64; 4], 2, &[1], 1).is_err());
        assert!(ctc_loss(&[0.0f64; 4], 2, &[0], 2).is_err());
    }

    #[test]
    fn matches_brute_force_small_cases() {
        let mut seed = 1u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 11) as f64 / (1u64 << 53) as f64) * 4.0 - 2.0
        };
        for classes in 2..=3 {
            let blank = classes - 1;
            for frames in 1..=4 {
                let lp = log_softmax_rows(&(0..frames * classes).map(|_| next()).collect::<Vec<_>>(), classes);
                for target in [vec![], vec![0], vec![0, 0], vec![0, 1], vec![1, 0]] {
                    if target.iter().any(|&c| c >= blank) {
                        continue;
                    }
                    let want = brute_force_nll(&lp, classes, &target, blank);
                    let got = ctc_loss(&lp, classes, &target, blank).unwrap().loss;
                    if want.is_infinite() {
                        assert!(got.is_infinite());
                    } else {
                        assert!((want - got).abs() < 1e-9, "{want} vs {got}");
                    }
                }
            }
        }
    }

    #[test]
    fn greedy_examples() {
        let vocab = Vocab::new(vec!['a', 'b']).unwrap();
        let rows = |ids: &[usize]| -> Vec<f64> {
            ids.iter()
                .flat_map(|&i| (0..3).map(move |c| if c == i { 0.0 } else { -5.0 }))
                .collect()
        };
        assert_eq!(greedy_decode(&rows(&[0, 0, 2, 1]), &vocab), "ab");
        assert_eq!(greedy_decode(&rows(&[2, 2, 2]), &vocab), "");
        assert_eq!(greedy_decode(&rows(&[0, 2, 0]), &vocab), "aa");
        // ties go to the lowest index
        assert_eq!(greedy_decode(&[-1.0f64, -1.0, -1.0], &vocab), "a");
    }
}
