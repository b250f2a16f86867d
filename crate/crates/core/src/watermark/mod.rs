//! Trigger-set construction, embedding by fine-tuning, and black-box extraction.

mod report;
mod triggers;

pub use report::{ExtractionReport, GroupScore, TriggerPrediction, Verdict};
pub use triggers::{build_trigger_set, clean_replay, group_sizes, TriggerExample, TriggerSet};

use std::collections::BTreeMap;

use crate::asr::{train_with, AsrModel, Optimizer, TrainOptions, TrainReport, Utterance};
use crate::audio::{AudioClip, TriggerKey};
use crate::error::{Error, Result};
use crate::metrics::{ber, score, ScoreReport};
use crate::scalar::Real;
use crate::seed::derive_seed;
use crate::stego::{StegoMessage, StegoModel};
use crate::text::normalize_transcript;

pub const DEFAULT_WER_THRESHOLD: f64 = 0.25;
pub const DEFAULT_CER_THRESHOLD: f64 = 0.30;

#[derive(Debug, Clone, PartialEq)]
pub struct WatermarkConfig {
    /// Number of owner clips, stegos and trigger groups.
    pub n: usize,
    pub message_bits: usize,
    pub key: TriggerKey<f64>,
    pub wer_threshold: f64,
    pub cer_threshold: f64,
    pub trigger_set_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Embedding optimizer; `None` keeps the model's own.
    pub optimizer: Option<Optimizer>,
    /// Learning rate of the last embedding epoch relative to the first.
    pub final_lr_fraction: f64,
    /// Extra clean training utterances, outside the trigger subset, added to the
    /// fine-tuning mixture.
    pub replay_clean: usize,
    pub seed: u64,
}

impl WatermarkConfig {
    /// `n` groups with keys spread evenly over `[0.3, 0.6]`.
    pub fn with_groups(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidConfig("n must be at least 1".into()));
        }
        let key = (0..n)
            .map(|i| if n == 1 { 0.45 } else { 0.3 + 0.3 * i as f64 / (n - 1) as f64 })
            .collect();
        Ok(Self {
            n,
            message_bits: crate::stego::DEFAULT_MESSAGE_BITS,
            key: TriggerKey::new(key)?,
            wer_threshold: DEFAULT_WER_THRESHOLD,
            cer_threshold: DEFAULT_CER_THRESHOLD,
            trigger_set_size: 100,
            learning_rate: 3e-3,
            epochs: 100,
            optimizer: Some(Optimizer::adam()),
            final_lr_fraction: 0.05,
            replay_clean: 100,
            seed: 0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if self.key.len() != self.n {
            return bad(format!("key has {} values but n = {}", self.key.len(), self.n));
        }
        if self.message_bits == 0 {
            return bad("message_bits must be positive".into());
        }
        for (name, t) in [("wer_threshold", self.wer_threshold), ("cer_threshold", self.cer_threshold)] {
            if !(t > 0.0 && t < 1.0) {
                return bad(format!("{name} = {t} must lie strictly between 0 and 1"));
            }
        }
        if self.trigger_set_size < self.n {
            return bad(format!(
                "trigger_set_size {} is smaller than n = {}",
                self.trigger_set_size, self.n
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if !(self.final_lr_fraction > 0.0 && self.final_lr_fraction <= 1.0) {
            return bad(format!("final_lr_fraction {} must lie in (0, 1]", self.final_lr_fraction));
        }
        Ok(())
    }
}

/// Clean-set accuracy before and after embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Fidelity {
    pub baseline_wer: f64,
    pub baseline_cer: f64,
    pub embedded_wer: f64,
    pub embedded_cer: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedOutcome<T> {
    pub model: AsrModel<T>,
    pub train: TrainReport,
    /// Present when a clean evaluation set was supplied.
    pub fidelity: Option<Fidelity>,
}

/// WER/CER of `model` on labelled utterances.
pub fn evaluate<T: Real>(model: &AsrModel<T>, data: &[Utterance]) -> Result<ScoreReport> {
    let refs: Vec<&str> = data.iter().map(Utterance::transcript).collect();
    let hyps = data
        .iter()
        .map(|u| model.predict(u.audio()))
        .collect::<Result<Vec<_>>>()?;
    score(&refs, &hyps)
}

/// Fine-tunes `model` on the trigger mixture.
pub fn embed<T: Real>(
    model: &AsrModel<T>,
    mixture: &[Utterance],
    cfg: &WatermarkConfig,
    clean_eval: Option<&[Utterance]>,
) -> Result<EmbedOutcome<T>> {
    cfg.validate()?;
    let mut opts = TrainOptions::for_model(model, cfg.epochs, cfg.learning_rate);
    opts.seed = derive_seed(cfg.seed, "embed");
    opts.final_lr_fraction = cfg.final_lr_fraction;
    if let Some(o) = cfg.optimizer {
        opts.optimizer = o;
    }
    let before = clean_eval.map(|e| evaluate(model, e)).transpose()?;
    let (marked, train) = train_with(model, mixture, &opts)?;
    let fidelity = match (before, clean_eval) {
        (Some(b), Some(e)) => {
            let after = evaluate(&marked, e)?;
            Some(Fidelity {
                baseline_wer: b.wer,
                baseline_cer: b.cer,
                embedded_wer: after.wer,
                embedded_cer: after.cer,
            })
        }
        _ => None,
    };
    Ok(EmbedOutcome {
        model: marked,
        train,
        fidelity,
    })
}

/// Queries `predict_fn` on every trigger and decides ownership from the text alone.
///
/// The verdict uses rates pooled over all triggers. The message is the mode
/// over groups that pass the thresholds on their own, so that groups whose
/// outputs were tampered with do not vote.
pub fn extract<F>(
    mut predict_fn: F,
    set: &TriggerSet,
    stego_model: &StegoModel,
    original: &StegoMessage,
    cfg: &WatermarkConfig,
) -> Result<ExtractionReport>
where
    F: FnMut(&AudioClip<f64>) -> Result<String>,
{
    if set.triggers.is_empty() {
        return Err(Error::invalid("trigger set is empty"));
    }
    let mut predictions = Vec::with_capacity(set.triggers.len());
    for (i, t) in set.triggers.iter().enumerate() {
        match predict_fn(&t.clip) {
            Ok(text) => predictions.push(TriggerPrediction {
                source_id: t.source_id.clone(),
                clip_index: t.clip_index,
                target: set.target(t.clip_index)?.text(),
                predicted: normalize_transcript(&text),
            }),
            Err(e) => {
                return Err(Error::PartialExtraction {
                    completed: predictions.into_iter().map(|p| p.predicted).collect(),
                    failed_at: i,
                    message: e.to_string(),
                })
            }
        }
    }
    let pooled = score_predictions(&predictions)?;
    let (wer, cer) = (pooled.wer, pooled.cer);
    let below = |wer: f64, cer: f64| wer < cfg.wer_threshold && cer < cfg.cer_threshold;
    let passes = below(wer, cer);

    let mut groups = Vec::new();
    for clip_index in 0..set.stegos.len() {
        let members: Vec<TriggerPrediction> =
            predictions.iter().filter(|p| p.clip_index == clip_index).cloned().collect();
        if members.is_empty() {
            continue;
        }
        let s = score_predictions(&members)?;
        groups.push(GroupScore {
            clip_index,
            triggers: members.len(),
            wer: s.wer,
            cer: s.cer,
            passes: below(s.wer, s.cer),
        });
    }

    // message -> (votes, lowest clip index that produced it)
    let mut votes: BTreeMap<Vec<bool>, (usize, usize)> = BTreeMap::new();
    let voting: Vec<usize> = groups.iter().filter(|g| g.passes).map(|g| g.clip_index).collect();
    for p in predictions.iter().filter(|p| voting.contains(&p.clip_index)) {
        let m = stego_model.nearest_stego_decode(&p.predicted, &set.stegos)?;
        let entry = votes.entry(m.message.bits().to_vec()).or_insert((0, m.clip_index));
        entry.0 += 1;
        entry.1 = entry.1.min(m.clip_index);
    }
    let modal = votes
        .into_iter()
        .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)));

    let mut rationale = if passes {
        format!("WER {wer:.4} < {} and CER {cer:.4} < {}", cfg.wer_threshold, cfg.cer_threshold)
    } else {
        format!(
            "WER {wer:.4} (threshold {}) and CER {cer:.4} (threshold {}) must both be below threshold",
            cfg.wer_threshold, cfg.cer_threshold
        )
    };
    let (recovered, ber_value) = match modal {
        Some((bits, (count, _))) => {
            rationale.push_str(&format!(
                "; modal message from {count} triggers in {} of {} groups",
                voting.len(),
                groups.len()
            ));
            let rate = ber(original.bits(), &bits)?;
            (Some(StegoMessage::new(bits)?), Some(rate))
        }
        None => {
            rationale.push_str("; no group passes on its own, nothing to decode");
            (None, None)
        }
    };
    Ok(ExtractionReport {
        predictions,
        wer,
        cer,
        wer_threshold: cfg.wer_threshold,
        cer_threshold: cfg.cer_threshold,
        groups,
        recovered,
        ber: ber_value,
        verdict: if passes { Verdict::Watermarked } else { Verdict::NotWatermarked },
        rationale,
    })
}

fn score_predictions(predictions: &[TriggerPrediction]) -> Result<ScoreReport> {
    let targets: Vec<&str> = predictions.iter().map(|p| p.target.as_str()).collect();
    let hyps: Vec<&str> = predictions.iter().map(|p| p.predicted.as_str()).collect();
    score(&targets, &hyps)
}
