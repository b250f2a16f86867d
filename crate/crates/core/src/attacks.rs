//! Removal attacks against a watermarked recognizer.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::asr::{train, train_with, AsrModel, TrainOptions, Utterance, WeightMask};
use crate::audio::{AudioClip, TriggerKey};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::seed::derive_seed;
use crate::stego::StegoText;
use crate::watermark::{build_trigger_set, embed, ExtractionReport, TriggerSet, WatermarkConfig};

pub const PRUNE_RECOVERY_EPOCHS: usize = 3;

/// Indices of the `floor(sparsity * len)` smallest magnitudes; ties by index.
pub fn smallest_magnitudes<T: Real>(weights: &[T], sparsity: f64) -> Vec<usize> {
    let count = (sparsity * weights.len() as f64).floor() as usize;
    let mut idx: Vec<usize> = (0..weights.len()).collect();
    idx.sort_by(|&a, &b| weights[a].abs().partial_cmp(&weights[b].abs()).unwrap().then(a.cmp(&b)));
    idx.truncate(count);
    idx.sort_unstable();
    idx
}

fn check_sparsity(sparsity: f64) -> Result<()> {
    if !(0.0..1.0).contains(&sparsity) {
        return Err(Error::invalid(format!("sparsity {sparsity} must lie in [0, 1)")));
    }
    Ok(())
}

/// Zeroes the smallest weights of every fully connected weight matrix and
/// installs the mask that keeps them at zero. Combines with an existing mask.
pub fn prune_weights<T: Real>(model: &AsrModel<T>, sparsity: f64) -> Result<AsrModel<T>> {
    check_sparsity(sparsity)?;
    let mut zeroed = Vec::new();
    for (i, (_, info, tensor)) in model.network().tensors().into_iter().enumerate() {
        let mut m = model.mask().map(|m| m.tensor(i).to_vec()).unwrap_or_default();
        if info.fully_connected {
            if m.is_empty() {
                m = vec![false; tensor.len()];
            }
            for j in smallest_magnitudes(tensor, sparsity) {
                m[j] = true;
            }
        }
        zeroed.push(m);
    }
    let mut pruned = model.clone();
    pruned.set_mask(WeightMask { zeroed })?;
    Ok(pruned)
}

/// Magnitude pruning followed by masked recovery fine-tuning at `lr` with
/// the model's own optimizer.
pub fn prune_attack<T: Real>(
    model: &AsrModel<T>,
    sparsity: f64,
    recover_data: &[Utterance],
    epochs: usize,
    lr: f64,
) -> Result<AsrModel<T>> {
    let pruned = prune_weights(model, sparsity)?;
    let mut opts = TrainOptions::for_model(&pruned, epochs, lr);
    opts.seed = derive_seed(pruned.hyperparams().seed, "prune-recovery");
    Ok(train_with(&pruned, recover_data, &opts)?.0)
}

/// Learning rate an attacker fine-tunes with: a tenth of the model's own training rate.
pub fn attack_learning_rate<T: Real>(model: &AsrModel<T>) -> f64 {
    model.hyperparams().learning_rate / 10.0
}

/// Plain training on clean data at `lr`.
pub fn finetune_attack<T: Real>(model: &AsrModel<T>, clean: &[Utterance], epochs: usize, lr: f64) -> Result<AsrModel<T>> {
    Ok(train(model, clean, epochs, lr)?.0)
}

/// Draws the attacker's key: `n` values uniform in `[min k, max k]`.
pub fn attacker_key(owner_key: &TriggerKey<f64>, n: usize, seed: u64) -> Result<TriggerKey<f64>> {
    let (lo, hi) = (owner_key.min(), owner_key.max());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..n)
        .map(|_| if lo == hi { lo } else { rng.random_range(lo..=hi) })
        .collect();
    TriggerKey::new(values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Overwrite<T> {
    pub model: AsrModel<T>,
    pub key: TriggerKey<f64>,
    /// The attacker's own trigger set, for checking that their mark took.
    pub trigger_set: TriggerSet,
}

/// Embeds a second watermark with the attacker's clips, stegos and a key
/// drawn from the owner's key range. `cfg` is the attacker's embedding setup;
/// its key is replaced by the drawn one.
pub fn overwrite_attack<T: Real>(
    model: &AsrModel<T>,
    data: &[Utterance],
    attacker_clips: &[AudioClip<f64>],
    attacker_stegos: &[StegoText],
    owner_key: &TriggerKey<f64>,
    cfg: &WatermarkConfig,
) -> Result<Overwrite<T>> {
    let key = attacker_key(owner_key, cfg.n, derive_seed(cfg.seed, "attacker-key"))?;
    let cfg = WatermarkConfig {
        key: key.clone(),
        ..cfg.clone()
    };
    let (trigger_set, mixture) = build_trigger_set(data, attacker_clips, attacker_stegos, &cfg, model.frontend())?;
    let out = embed(model, &mixture, &cfg, None)?;
    Ok(Overwrite {
        model: out.model,
        key,
        trigger_set,
    })
}

/// Wraps a transcriber so that outputs equal to an intercepted stego are
/// replaced by seeded random text of the same length.
pub struct LabelDetectionEvasion<F> {
    inner: F,
    intercepted: HashSet<String>,
    rng: ChaCha8Rng,
}

impl<F> LabelDetectionEvasion<F>
where
    F: FnMut(&AudioClip<f64>) -> Result<String>,
{
    pub fn new(inner: F, intercepted: &[StegoText], seed: u64) -> Self {
        Self {
            inner,
            intercepted: intercepted.iter().map(StegoText::text).collect(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn predict(&mut self, clip: &AudioClip<f64>) -> Result<String> {
        let out = (self.inner)(clip)?;
        if !self.intercepted.contains(&out) {
            return Ok(out);
        }
        const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz ";
        Ok((0..out.len())
            .map(|_| ALPHABET[self.rng.random_range(0..ALPHABET.len())] as char)
            .collect())
    }
}

/// Decides whether a transcript looks like hidden-message text.
pub trait Steganalysis {
    fn is_stego(&self, text: &str) -> bool;
}

/// Flags nothing.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoSteganalysis;

impl Steganalysis for NoSteganalysis {
    fn is_stego(&self, _text: &str) -> bool {
        false
    }
}

/// Replaces flagged transcripts with an empty string.
pub fn steganalysis_evasion<F, S>(mut inner: F, detector: S) -> impl FnMut(&AudioClip<f64>) -> Result<String>
where
    F: FnMut(&AudioClip<f64>) -> Result<String>,
    S: Steganalysis,
{
    move |clip| {
        let out = inner(clip)?;
        Ok(if detector.is_stego(&out) { String::new() } else { out })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackReport {
    pub name: String,
    pub params: Vec<(String, String)>,
    pub clean_wer: f64,
    pub clean_cer: f64,
    pub extraction: ExtractionReport,
}

impl AttackReport {
    /// The attack only wins if it breaks the mark while keeping accuracy.
    pub fn watermark_survived(&self) -> bool {
        self.extraction.proves_ownership()
    }

    pub fn to_kv(&self) -> String {
        let p = format!("attack.{}.", self.name);
        let mut out = format!("{p}name={}\n", self.name);
        for (k, v) in &self.params {
            out.push_str(&format!("{p}param.{k}={v}\n"));
        }
        out.push_str(&format!("{p}clean_wer={:.6}\n{p}clean_cer={:.6}\n", self.clean_wer, self.clean_cer));
        out.push_str(&format!("{p}survived={}\n", self.watermark_survived()));
        out.push_str(&self.extraction.to_kv(&format!("{p}extract.")));
        out
    }
}
