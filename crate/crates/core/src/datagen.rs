//! Synthetic "tone language" corpus and owner-clip generation.
//!
//! Every character of the alphabet is voiced as a pure tone at its own
//! frequency for a fixed symbol duration, with short raised-cosine ramps so
//! that repeated characters stay separable, plus seeded Gaussian noise. The
//! result is trivially learnable and fully deterministic, which lets the
//! watermarking pipeline run end to end on a laptop.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::asr::{FrontendConfig, Utterance};
use crate::audio::{write_wav, AudioClip, SAMPLE_RATE_HZ};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// Owner and attacker clips sweep inside this band, well above the language.
pub const OWNER_BAND_HZ: (f64, f64) = (4_500.0, 7_500.0);

#[derive(Debug, Clone, PartialEq)]
pub struct ToneLanguageSpec {
    /// Spoken characters; a subset of the recognizer vocabulary.
    pub alphabet: String,
    /// Frequency of character `i` is `base_hz + step_hz * i`.
    pub base_hz: f64,
    pub step_hz: f64,
    pub symbol_ms: f64,
    pub ramp_ms: f64,
    pub amplitude: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for ToneLanguageSpec {
    fn default() -> Self {
        Self {
            alphabet: "abcdefghijklm ".into(),
            base_hz: 300.0,
            step_hz: 150.0,
            symbol_ms: 80.0,
            ramp_ms: 8.0,
            amplitude: 0.5,
            noise_std: 0.01,
            seed: 0,
        }
    }
}

impl ToneLanguageSpec {
    pub fn frequency(&self, c: char) -> Option<f64> {
        self.alphabet
            .chars()
            .position(|a| a == c)
            .map(|i| self.base_hz + self.step_hz * i as f64)
    }

    /// Highest character frequency.
    pub fn band_top_hz(&self) -> f64 {
        self.base_hz + self.step_hz * (self.alphabet.chars().count().saturating_sub(1)) as f64
    }

    fn symbol_samples(&self) -> usize {
        (self.symbol_ms * SAMPLE_RATE_HZ as f64 / 1000.0).round() as usize
    }

    fn letters(&self) -> Vec<char> {
        self.alphabet.chars().filter(|&c| c != ' ').collect()
    }

    pub fn validate(&self, frontend: &FrontendConfig) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let chars: Vec<char> = self.alphabet.chars().collect();
        let mut dedup = chars.clone();
        dedup.sort_unstable();
        dedup.dedup();
        if dedup.len() != chars.len() || self.letters().is_empty() {
            return bad(format!("alphabet {:?} must have distinct characters and a letter", self.alphabet));
        }
        if !(self.base_hz > 0.0 && self.step_hz > 0.0) {
            return bad("tone frequencies must be positive and increasing".into());
        }
        if self.band_top_hz() >= OWNER_BAND_HZ.0 {
            return bad(format!(
                "language band reaches {} Hz, overlapping the owner band",
                self.band_top_hz()
            ));
        }
        let min_ms = frontend.frame_len_ms + frontend.hop_ms;
        if self.symbol_ms < min_ms {
            return bad(format!("symbol duration must be at least {min_ms} ms (two frames)"));
        }
        if !(self.ramp_ms >= 0.0 && 2.0 * self.ramp_ms < self.symbol_ms) {
            return bad("ramps must fit inside a symbol".into());
        }
        if !(self.amplitude > 0.0 && self.amplitude <= 1.0 && self.noise_std >= 0.0) {
            return bad("amplitude must be in (0, 1] and noise non-negative".into());
        }
        Ok(())
    }
}

fn ramp_envelope(len: usize, ramp: usize) -> Vec<f64> {
    (0..len)
        .map(|i| {
            let edge = i.min(len - 1 - i);
            if edge < ramp {
                0.5 - 0.5 * (PI * edge as f64 / ramp as f64).cos()
            } else {
                1.0
            }
        })
        .collect()
}

/// Voices `text` in the tone language; `seed` drives the additive noise.
pub fn synth_utterance(id: &str, text: &str, spec: &ToneLanguageSpec, seed: u64) -> Result<Utterance> {
    if text.is_empty() {
        return Err(Error::invalid("cannot voice an empty text"));
    }
    let n = spec.symbol_samples();
    let ramp = (spec.ramp_ms * SAMPLE_RATE_HZ as f64 / 1000.0).round() as usize;
    let env = ramp_envelope(n, ramp);
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n * text.len());
    for c in text.chars() {
        let f = spec
            .frequency(c)
            .ok_or_else(|| Error::invalid(format!("character {c:?} is not in the tone alphabet")))?;
        samples.extend(env.iter().enumerate().map(|(i, e)| {
            spec.amplitude * e * (2.0 * PI * f * i as f64 / SAMPLE_RATE_HZ as f64).sin()
        }));
    }
    for s in &mut samples {
        *s += noise.sample(&mut rng);
    }
    Utterance::new(id, AudioClip::new(samples, SAMPLE_RATE_HZ)?, text)
}

/// Random text of exactly `len` characters: letters with single spaces
/// between words of at least two letters, never at either end.
fn random_text(rng: &mut impl Rng, letters: &[char], with_spaces: bool, len: usize) -> String {
    let mut out = String::with_capacity(len);
    let mut word = 0;
    for i in 0..len {
        let space_ok = with_spaces && word >= 2 && i + 2 < len;
        if space_ok && rng.random_bool(0.3) {
            out.push(' ');
            word = 0;
        } else {
            out.push(letters[rng.random_range(0..letters.len())]);
            word += 1;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub train: Vec<Utterance>,
    pub eval: Vec<Utterance>,
}

/// Seeded corpus with an 80/20 train/eval split.
pub fn gen_corpus(spec: &ToneLanguageSpec, num_utterances: usize, min_len: usize, max_len: usize) -> Result<Corpus> {
    if min_len == 0 || max_len < min_len {
        return Err(Error::invalid(format!("bad length range {min_len}..={max_len}")));
    }
    let letters = spec.letters();
    if letters.is_empty() {
        return Err(Error::InvalidConfig("tone alphabet has no letters".into()));
    }
    let with_spaces = spec.alphabet.contains(' ');
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "corpus-text"));
    let mut all = Vec::with_capacity(num_utterances);
    for i in 0..num_utterances {
        let len = rng.random_range(min_len..=max_len);
        let text = random_text(&mut rng, &letters, with_spaces, len);
        let seed = derive_seed(spec.seed, &format!("utterance-{i}"));
        all.push(synth_utterance(&format!("utt{i:05}"), &text, spec, seed)?);
    }
    let eval = all.split_off(num_utterances - num_utterances / 5);
    Ok(Corpus { train: all, eval })
}

/// `n` distinct linear chirps of 100–300 ms inside [`OWNER_BAND_HZ`].
pub fn gen_owner_clips(n: usize, seed: u64) -> Result<Vec<AudioClip<f64>>> {
    if n == 0 {
        return Err(Error::invalid("need at least one owner clip"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "owner-clips"));
    let sr = SAMPLE_RATE_HZ as f64;
    let (lo, hi) = OWNER_BAND_HZ;
    (0..n)
        .map(|_| {
            let dur = rng.random_range(0.1..=0.3);
            let f0 = rng.random_range(lo..hi);
            let f1 = rng.random_range(lo..hi);
            let len = (dur * sr).round() as usize;
            let env = ramp_envelope(len, (0.005 * sr) as usize);
            let samples = (0..len)
                .map(|i| {
                    let t = i as f64 / sr;
                    let phase = 2.0 * PI * (f0 * t + (f1 - f0) * t * t / (2.0 * dur));
                    0.5 * env[i] * phase.sin()
                })
                .collect();
            AudioClip::new(samples, SAMPLE_RATE_HZ)
        })
        .collect()
}

/// Writes utterances as WAV files plus a `path<TAB>transcript` manifest.
pub fn write_manifest(dir: &Path, name: &str, utterances: &[Utterance]) -> Result<PathBuf> {
    let wav_dir = dir.join(name);
    fs::create_dir_all(&wav_dir).map_err(|e| Error::io(&wav_dir, e))?;
    let mut manifest = String::new();
    for u in utterances {
        let rel = format!("{name}/{}.wav", u.id());
        write_wav(u.audio(), dir.join(&rel))?;
        manifest.push_str(&format!("{rel}\t{}\n", u.transcript()));
    }
    let path = dir.join(format!("{name}.tsv"));
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Loads a manifest written by [`write_manifest`]; paths are relative to its directory.
pub fn read_manifest(path: &Path) -> Result<Vec<Utterance>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    body.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let (rel, text) = line
                .split_once('\t')
                .ok_or_else(|| Error::Format(format!("{}:{}: expected path<TAB>transcript", path.display(), n + 1)))?;
            let id = Path::new(rel)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| format!("line{}", n + 1));
            Utterance::new(&id, crate::audio::read_wav(base.join(rel))?, text)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Frequency of the largest DFT magnitude, by direct summation.
    fn dominant_hz(x: &[f64]) -> f64 {
        let n = x.len();
        let (best, _) = (1..n / 2)
            .map(|k| {
                let (re, im) = x.iter().enumerate().fold((0.0, 0.0), |(re, im), (i, v)| {
                    let a = 2.0 * PI * (k * i) as f64 / n as f64;
                    (re + v * a.cos(), im - v * a.sin())
                });
                (k, re * re + im * im)
            })
            .fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a });
        best as f64 * SAMPLE_RATE_HZ as f64 / n as f64
    }

    #[test]
    fn single_symbol_has_the_character_frequency() {
        let spec = ToneLanguageSpec::default();
        let u = synth_utterance("u", "c", &spec, 3).unwrap();
        assert_eq!(u.audio().len(), 1280);
        let f = dominant_hz(u.audio().samples());
        // DFT bins are 12.5 Hz apart at this length
        assert!((f - spec.frequency('c').unwrap()).abs() <= 12.5, "{f}");
    }

    #[test]
    fn synthesis_errors_and_determinism() {
        let spec = ToneLanguageSpec::default();
        assert!(synth_utterance("u", "", &spec, 0).is_err());
        assert!(synth_utterance("u", "az", &spec, 0).is_err());
        let a = synth_utterance("u", "ab c", &spec, 9).unwrap();
        let b = synth_utterance("u", "ab c", &spec, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, synth_utterance("u", "ab c", &spec, 10).unwrap());
    }

    #[test]
    fn corpus_split_and_lengths() {
        let spec = ToneLanguageSpec::default();
        let c = gen_corpus(&spec, 10, 3, 3).unwrap();
        assert_eq!((c.train.len(), c.eval.len()), (8, 2));
        assert!(c.train.iter().chain(&c.eval).all(|u| u.transcript().len() == 3));
        for u in &c.eval {
            assert!(c.train.iter().all(|t| t.id() != u.id()));
        }
        let c = gen_corpus(&spec, 40, 6, 12).unwrap();
        for u in c.train.iter().chain(&c.eval) {
            let t = u.transcript();
            assert!((6..=12).contains(&t.len()));
            assert!(!t.starts_with(' ') && !t.ends_with(' ') && !t.contains("  "));
        }
        assert!(gen_corpus(&spec, 10, 0, 3).is_err());
        assert!(gen_corpus(&spec, 10, 4, 3).is_err());
    }

    #[test]
    fn manifests_are_reproducible() {
        let spec = ToneLanguageSpec::default();
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        let mut bodies = Vec::new();
        for d in &dirs {
            let c = gen_corpus(&spec, 5, 2, 4).unwrap();
            let p = write_manifest(d.path(), "train", &c.train).unwrap();
            bodies.push((fs::read(&p).unwrap(), fs::read(d.path().join("train/utt00000.wav")).unwrap()));
            let back = read_manifest(&p).unwrap();
            assert_eq!(back.len(), c.train.len());
            assert_eq!(back[0].transcript(), c.train[0].transcript());
        }
        assert_eq!(bodies[0], bodies[1]);
    }

    #[test]
    fn owner_clips_are_short_distinct_and_out_of_band() {
        let spec = ToneLanguageSpec::default();
        let one = gen_owner_clips(1, 0).unwrap();
        let d = one[0].duration_secs();
        assert!((0.1..=0.3).contains(&d));
        let clips = gen_owner_clips(10, 5).unwrap();
        for i in 0..clips.len() {
            for j in i + 1..clips.len() {
                assert_ne!(clips[i], clips[j]);
            }
        }
        for c in clips.iter().take(3) {
            let f = dominant_hz(&c.samples()[..1600]);
            assert!(f > spec.band_top_hz() + 1000.0, "{f}");
        }
        assert!(gen_owner_clips(0, 0).is_err());
    }

    #[test]
    fn spec_validation() {
        let fe = FrontendConfig::default();
        assert!(ToneLanguageSpec::default().validate(&fe).is_ok());
        let s = ToneLanguageSpec { symbol_ms: 30.0, ..Default::default() };
        assert!(s.validate(&fe).is_err());
        let s = ToneLanguageSpec { step_hz: 400.0, ..Default::default() };
        assert!(s.validate(&fe).is_err());
        let s = ToneLanguageSpec { alphabet: "aa".into(), ..Default::default() };
        assert!(s.validate(&fe).is_err());
    }
}
