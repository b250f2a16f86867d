//! Mono waveforms and trigger-audio synthesis.
//!
//! A trigger is built by tiling a short owner clip `s` until it covers the
//! input `x`, cropping the tiled pattern to `len(x)` and adding it with a
//! weight chosen so that the added power is `k` times the power of `x`:
//!
//! ```text
//! R  = ceil(len(x) / len(s))
//! u  = s repeated R times            (length R * len(s))
//! u' = u[..len(x)]
//! w  = sqrt(sum(x^2) * k / len(x)) / sqrt(sum(u^2) / len(u))
//! x' = x + w * u'
//! ```
//!
//! Note that the denominator uses the uncropped pattern `u`. When `len(x)`
//! is a multiple of `len(s)` the realized power ratio is exactly `k`.

mod wav;

pub use wav::{read_wav, write_wav, WavWriteSummary};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Canonical sample rate of every clip the pipeline produces.
pub const SAMPLE_RATE_HZ: u32 = 16_000;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip<T = f64> {
    samples: Vec<T>,
    sample_rate_hz: u32,
}

impl<T: Real> AudioClip<T> {
    /// Wraps samples, rejecting non-finite values and a zero sample rate.
    pub fn new(samples: Vec<T>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    /// Sum of squared samples.
    pub fn energy(&self) -> T {
        energy(&self.samples)
    }

    /// Energy divided by length; zero for an empty clip.
    pub fn mean_power(&self) -> T {
        mean_power(&self.samples)
    }

    /// Converts the sample type, e.g. `f64` clips into `f32` model input.
    pub fn cast<U: Real>(&self) -> AudioClip<U> {
        AudioClip {
            samples: self.samples.iter().map(|&v| U::lit(v.as_f64())).collect(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

pub fn energy<T: Real>(xs: &[T]) -> T {
    xs.iter().map(|&v| v * v).sum()
}

pub fn mean_power<T: Real>(xs: &[T]) -> T {
    if xs.is_empty() {
        T::zero()
    } else {
        energy(xs) / T::lit(xs.len() as f64)
    }
}

/// Per-owner-clip mixing ratios `k_1..k_n`.
///
/// Each `k_i` is the linear ratio of added trigger power to clean power.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerKey<T = f64> {
    values: Vec<T>,
}

impl<T: Real> TriggerKey<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("trigger key must hold at least one ratio"));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > T::zero())) {
            return Err(Error::invalid(format!(
                "key ratios must be finite and positive, got {v}"
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }
}

/// Result of tiling an owner clip over a target length.
#[derive(Debug, Clone, PartialEq)]
pub struct TiledPattern<T> {
    /// Repetition count `R`.
    pub repetitions: usize,
    /// The full pattern `u` of length `R * len(s)`.
    pub full: Vec<T>,
    /// `u` cropped from the beginning to the target length.
    pub cropped: Vec<T>,
}

pub fn tile_owner_clip<T: Real>(owner: &AudioClip<T>, target_len: usize) -> Result<TiledPattern<T>> {
    if owner.is_empty() {
        return Err(Error::invalid("owner clip is empty"));
    }
    if target_len == 0 {
        return Err(Error::invalid("target length must be at least one sample"));
    }
    let s = owner.samples();
    let repetitions = target_len.div_ceil(s.len());
    let full: Vec<T> = s.iter().copied().cycle().take(repetitions * s.len()).collect();
    let cropped = full[..target_len].to_vec();
    Ok(TiledPattern {
        repetitions,
        full,
        cropped,
    })
}

/// Mixing weight `w` that makes the added pattern carry `k` times the mean
/// power of `x`, measured against the uncropped pattern `u`.
pub fn mix_weight<T: Real>(x: &[T], pattern: &[T], k: T) -> Result<T> {
    let pattern_energy = energy(pattern);
    if pattern.is_empty() || pattern_energy == T::zero() {
        return Err(Error::DegeneratePattern);
    }
    if x.is_empty() {
        return Err(Error::invalid("clean clip is empty"));
    }
    if !(k.is_finite() && k >= T::zero()) {
        return Err(Error::invalid(format!("mixing ratio must be finite and >= 0, got {k}")));
    }
    let signal = (energy(x) * k / T::lit(x.len() as f64)).sqrt();
    let noise = (pattern_energy / T::lit(pattern.len() as f64)).sqrt();
    Ok(signal / noise)
}

/// A synthesized trigger together with the weight that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Trigger<T = f64> {
    pub clip: AudioClip<T>,
    pub weight: T,
    /// Set when `x` had zero energy, in which case `clip == x`.
    pub degenerate_input: bool,
}

/// `x' = x + w * u'` for the owner clip `s` and ratio `k`.
pub fn synthesize_trigger<T: Real>(x: &AudioClip<T>, owner: &AudioClip<T>, k: T) -> Result<Trigger<T>> {
    if x.is_empty() {
        return Err(Error::invalid("clean clip is empty"));
    }
    if x.sample_rate_hz() != owner.sample_rate_hz() {
        return Err(Error::invalid(format!(
            "sample rate mismatch: clip {} Hz, owner clip {} Hz",
            x.sample_rate_hz(),
            owner.sample_rate_hz()
        )));
    }
    let tiled = tile_owner_clip(owner, x.len())?;
    let weight = mix_weight(x.samples(), &tiled.full, k)?;
    let degenerate_input = x.energy() == T::zero();
    if degenerate_input {
        log::warn!("trigger synthesis on a zero-energy clip; returning it unchanged");
    }
    let samples = x
        .samples()
        .iter()
        .zip(&tiled.cropped)
        .map(|(&a, &b)| a + weight * b)
        .collect();
    Ok(Trigger {
        clip: AudioClip::new(samples, x.sample_rate_hz())?,
        weight,
        degenerate_input,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn clip(v: &[f64]) -> AudioClip {
        AudioClip::new(v.to_vec(), SAMPLE_RATE_HZ).unwrap()
    }

    #[test]
    fn tiling_examples() {
        let t = tile_owner_clip(&clip(&[0.5, -0.5]), 5).unwrap();
        assert_eq!(t.cropped, vec![0.5, -0.5, 0.5, -0.5, 0.5]);
        assert_eq!(t.repetitions, 3);
        assert_eq!(t.full.len(), 6);

        let t = tile_owner_clip(&clip(&[0.1, 0.2, 0.3]), 3).unwrap();
        assert_eq!(t.cropped, vec![0.1, 0.2, 0.3]);
        assert_eq!(t.repetitions, 1);

        let t = tile_owner_clip(&clip(&[1.0]), 4).unwrap();
        assert_eq!(t.cropped, vec![1.0; 4]);
        assert_eq!(t.repetitions, 4);
    }

    #[test]
    fn owner_longer_than_target_is_cropped_once() {
        let t = tile_owner_clip(&clip(&[1.0, 2.0, 3.0, 4.0]), 2).unwrap();
        assert_eq!(t.repetitions, 1);
        assert_eq!(t.full, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(t.cropped, vec![1.0, 2.0]);
    }

    #[test]
    fn tiling_rejects_empty_inputs() {
        assert!(matches!(
            tile_owner_clip(&clip(&[]), 3),
            Err(Error::InvalidInput(_))
        ));
        assert!(tile_owner_clip(&clip(&[1.0]), 0).is_err());
    }

    #[test]
    fn weight_examples() {
        assert_eq!(mix_weight(&[0.3, -0.2], &[1.0, 2.0], 0.0).unwrap(), 0.0);
        let w = mix_weight(&[0.5f64; 4], &[1.0; 4], 0.25).unwrap();
        assert!((w - 0.25).abs() < 1e-15);
        let x = [0.1f64, -0.7, 0.4];
        assert!((mix_weight(&x, &x, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            mix_weight(&x, &[0.0, 0.0], 1.0),
            Err(Error::DegeneratePattern)
        ));
    }

    #[test]
    fn synthesis_examples() {
        let x = clip(&[0.2, -0.1, 0.4]);
        let s = clip(&[0.9, 0.3]);
        let t = synthesize_trigger(&x, &s, 0.0).unwrap();
        assert_eq!(t.clip, x);

        let zeros = clip(&[0.0; 8]);
        let t = synthesize_trigger(&zeros, &s, 0.5).unwrap();
        assert_eq!(t.clip, zeros);
        assert!(t.degenerate_input);
        assert_eq!(t.weight, 0.0);

        let t = synthesize_trigger(&clip(&[0.5; 4]), &clip(&[1.0]), 0.25).unwrap();
        for v in t.clip.samples() {
            assert!((v - 0.75).abs() < 1e-15);
        }
    }

    #[test]
    fn synthesis_rejects_rate_mismatch() {
        let x = clip(&[0.1, 0.2]);
        let s = AudioClip::new(vec![1.0], 8_000).unwrap();
        assert!(synthesize_trigger(&x, &s, 1.0).is_err());
    }

    #[test]
    fn nonfinite_samples_rejected() {
        assert!(AudioClip::new(vec![0.0, f64::NAN], 16_000).is_err());
        assert!(AudioClip::new(vec![0.0], 0).is_err());
        assert!(TriggerKey::new(vec![0.5, 0.0]).is_err());
        assert!(TriggerKey::<f64>::new(vec![]).is_err());
    }

    #[test]
    fn non_boundary_crop_deviation_is_bounded() {
        let x = clip(&[0.3, -0.6, 0.2, 0.5, -0.1]);
        let s = clip(&[1.0, 0.2, -0.4]);
        let k = 0.7;
        let tiled = tile_owner_clip(&s, x.len()).unwrap();
        let t = synthesize_trigger(&x, &s, k).unwrap();
        let added: Vec<f64> = t.clip.samples().iter().zip(x.samples()).map(|(a, b)| a - b).collect();
        let ratio = mean_power(&added) / x.mean_power();
        let deviation = (1.0 - mean_power(&tiled.cropped) / mean_power(&tiled.full)).abs();
        assert!((ratio / k - 1.0).abs() <= deviation + 1e-12);
    }

    fn samples(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1.0f64..1.0, 1..max_len)
    }

    proptest! {
        #[test]
        fn tiled_pattern_is_periodic(s in samples(12), target in 1usize..60) {
            let t = tile_owner_clip(&clip(&s), target).unwrap();
            prop_assert_eq!(t.cropped.len(), target);
            prop_assert_eq!(t.repetitions, target.div_ceil(s.len()));
            for j in 0..target {
                prop_assert_eq!(t.cropped[j], s[j % s.len()]);
                if j + s.len() < target {
                    prop_assert_eq!(t.cropped[j], t.cropped[j + s.len()]);
                }
            }
        }

        #[test]
        fn boundary_crop_realizes_exact_ratio(s in samples(10), reps in 1usize..6, k in 0.01f64..4.0, seed in 0u64..1000) {
            prop_assume!(energy(&s) > 1e-6);
            let len = s.len() * reps;
            let x: Vec<f64> = (0..len).map(|i| ((i as f64 + 1.0) * (seed as f64 + 0.37)).sin()).collect();
            prop_assume!(energy(&x) > 1e-6);
            let t = synthesize_trigger(&clip(&x), &clip(&s), k).unwrap();
            let added: Vec<f64> = t.clip.samples().iter().zip(&x).map(|(a, b)| a - b).collect();
            let ratio = mean_power(&added) / mean_power(&x);
            prop_assert!((ratio / k - 1.0).abs() < 1e-9);
        }

        #[test]
        fn added_component_scales_with_sqrt_k(x in samples(20), s in samples(7), k in 0.01f64..2.0, c in 0.1f64..3.0) {
            prop_assume!(energy(&x) > 1e-6 && energy(&s) > 1e-6);
            let (x, s) = (clip(&x), clip(&s));
            let a = synthesize_trigger(&x, &s, k).unwrap();
            let b = synthesize_trigger(&x, &s, k * c * c).unwrap();
            for ((pa, pb), base) in a.clip.samples().iter().zip(b.clip.samples()).zip(x.samples()) {
                let (da, db) = (pa - base, pb - base);
                prop_assert!((db - c * da).abs() <= 1e-9 * (1.0 + db.abs()));
            }
        }
    }
}
