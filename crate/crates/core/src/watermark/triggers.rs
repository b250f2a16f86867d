use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::asr::{min_frames, FrontendConfig, Utterance};
use crate::audio::{read_wav, synthesize_trigger, write_wav, AudioClip};
use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::stego::{read_stegos, write_stegos, StegoText};
use crate::watermark::WatermarkConfig;

/// One triggered clip with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerExample {
    pub source_id: String,
    /// Owner clip, key value and stego used for this trigger.
    pub clip_index: usize,
    pub key: f64,
    pub weight: f64,
    pub clip: AudioClip<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriggerSet {
    /// Target stego of group `i` at position `i`.
    pub stegos: Vec<StegoText>,
    pub triggers: Vec<TriggerExample>,
}

/// Sizes of `n` near-equal groups; the remainder goes to the lowest indices.
pub fn group_sizes(total: usize, n: usize) -> Vec<usize> {
    (0..n).map(|i| total / n + usize::from(i < total % n)).collect()
}

fn label_frames(text: &str) -> usize {
    let chars: Vec<char> = text.chars().collect();
    min_frames(&chars)
}

/// Selects a seeded subset of `data`, splits it into `n` groups and turns
/// group `i` into triggers with owner clip `i`, key `k_i` and target stego `i`.
///
/// Returns the trigger set and the fine-tuning mixture: every trigger with
/// its stego label, the clean copy of every selected utterance, and
/// `cfg.replay_clean` further clean utterances (see [`clean_replay`]).
/// Only utterances with enough frames to carry the longest stego are eligible.
pub fn build_trigger_set(
    data: &[Utterance],
    owner_clips: &[AudioClip<f64>],
    stegos: &[StegoText],
    cfg: &WatermarkConfig,
    frontend: &FrontendConfig,
) -> Result<(TriggerSet, Vec<Utterance>)> {
    cfg.validate()?;
    if owner_clips.len() != cfg.n || stegos.len() != cfg.n {
        return Err(Error::InvalidConfig(format!(
            "n = {} but got {} owner clips and {} stegos",
            cfg.n,
            owner_clips.len(),
            stegos.len()
        )));
    }
    if let Some((i, s)) = stegos.iter().enumerate().find(|(i, s)| s.clip_index() != *i) {
        return Err(Error::invalid(format!("stego at position {i} is labelled for clip {}", s.clip_index())));
    }
    let needed = stegos.iter().map(|s| label_frames(&s.text())).max().unwrap_or(0);
    let eligible: Vec<usize> = (0..data.len())
        .filter(|&i| frontend.frame_count(data[i].audio().len()) >= needed)
        .collect();
    if eligible.len() < cfg.trigger_set_size {
        return Err(Error::invalid(format!(
            "only {} of {} utterances have the {needed} frames the stegos need; trigger_set_size is {}",
            eligible.len(),
            data.len(),
            cfg.trigger_set_size
        )));
    }
    if eligible.len() < data.len() {
        log::info!("{} utterances too short to carry a stego", data.len() - eligible.len());
    }

    let mut chosen = eligible;
    chosen.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "trigger-subset")));
    chosen.truncate(cfg.trigger_set_size);

    let mut triggers = Vec::with_capacity(chosen.len());
    let mut mixture = Vec::with_capacity(2 * chosen.len());
    let mut picks = chosen.iter();
    for (group, size) in group_sizes(chosen.len(), cfg.n).into_iter().enumerate() {
        let k = cfg.key.values()[group];
        let target = stegos[group].text();
        for &idx in picks.by_ref().take(size) {
            let utt = &data[idx];
            let t = synthesize_trigger(utt.audio(), &owner_clips[group], k)?;
            mixture.push(Utterance::new(&format!("{}-g{group}", utt.id()), t.clip.clone(), &target)?);
            triggers.push(TriggerExample {
                source_id: utt.id().to_string(),
                clip_index: group,
                key: k,
                weight: t.weight,
                clip: t.clip,
            });
        }
    }
    mixture.extend(chosen.iter().map(|&i| data[i].clone()));
    let set = TriggerSet {
        stegos: stegos.to_vec(),
        triggers,
    };
    mixture.extend(clean_replay(data, &set, cfg));
    Ok((set, mixture))
}

/// A seeded sample of `cfg.replay_clean` utterances from `data` that are not
/// sources of any trigger in `set`, to be appended to the fine-tuning mixture.
pub fn clean_replay(data: &[Utterance], set: &TriggerSet, cfg: &WatermarkConfig) -> Vec<Utterance> {
    let used: std::collections::HashSet<&str> = set.triggers.iter().map(|t| t.source_id.as_str()).collect();
    let mut pool: Vec<&Utterance> = data.iter().filter(|u| !used.contains(u.id())).collect();
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "clean-replay")));
    pool.into_iter().take(cfg.replay_clean).cloned().collect()
}

const MANIFEST: &str = "triggers.tsv";
const STEGOS: &str = "stegos.txt";

impl TriggerSet {
    pub fn target(&self, clip_index: usize) -> Result<&StegoText> {
        self.stegos
            .get(clip_index)
            .ok_or_else(|| Error::invalid(format!("no stego for clip index {clip_index}")))
    }

    /// Group sizes in clip-index order.
    pub fn group_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.stegos.len()];
        for t in &self.triggers {
            counts[t.clip_index] += 1;
        }
        counts
    }

    /// Writes WAVs under `dir/triggers/`, the stegos, and a manifest with columns
    /// `path, target, source_id, clip_index, key, weight`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let wav_dir = dir.join("triggers");
        fs::create_dir_all(&wav_dir).map_err(|e| Error::io(&wav_dir, e))?;
        let mut manifest = String::new();
        for t in &self.triggers {
            let rel = format!("triggers/{}-g{}.wav", t.source_id, t.clip_index);
            write_wav(&t.clip, dir.join(&rel))?;
            manifest.push_str(&format!(
                "{rel}\t{}\t{}\t{}\t{:?}\t{:?}\n",
                self.target(t.clip_index)?.text(),
                t.source_id,
                t.clip_index,
                t.key,
                t.weight
            ));
        }
        let path = dir.join(MANIFEST);
        fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
        write_stegos(dir.join(STEGOS), &self.stegos)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let stegos = read_stegos(dir.join(STEGOS))?;
        let path = dir.join(MANIFEST);
        let body = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let bad = |n: usize, what: &str| Error::Format(format!("{}:{}: {what}", path.display(), n + 1));
        let mut triggers = Vec::new();
        for (n, line) in body.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let cols: Vec<&str> = line.split('\t').collect();
            let [rel, target, source_id, clip_index, key, weight] = cols[..] else {
                return Err(bad(n, "expected 6 tab-separated columns"));
            };
            let clip_index: usize = clip_index.parse().map_err(|_| bad(n, "bad clip index"))?;
            let stego = stegos.get(clip_index).ok_or_else(|| bad(n, "clip index has no stego"))?;
            if stego.text() != target {
                return Err(bad(n, "target does not match the stored stego"));
            }
            triggers.push(TriggerExample {
                source_id: source_id.to_string(),
                clip_index,
                key: key.parse().map_err(|_| bad(n, "bad key"))?,
                weight: weight.parse().map_err(|_| bad(n, "bad weight"))?,
                clip: read_wav(dir.join(rel))?,
            });
        }
        Ok(Self { stegos, triggers })
    }
}
