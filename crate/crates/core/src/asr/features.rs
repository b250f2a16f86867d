//! Log mel filter-bank frontend.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontendConfig {
    pub sample_rate_hz: u32,
    pub frame_len_ms: f64,
    pub hop_ms: f64,
    pub n_fft: usize,
    pub n_filters: usize,
    pub f_min_hz: f64,
    pub f_max_hz: f64,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: crate::audio::SAMPLE_RATE_HZ,
            frame_len_ms: 25.0,
            hop_ms: 10.0,
            n_fft: 512,
            n_filters: 26,
            f_min_hz: 0.0,
            f_max_hz: 8_000.0,
        }
    }
}

impl FrontendConfig {
    pub fn frame_len(&self) -> usize {
        (self.frame_len_ms * self.sample_rate_hz as f64 / 1000.0).round() as usize
    }

    pub fn hop(&self) -> usize {
        (self.hop_ms * self.sample_rate_hz as f64 / 1000.0).round() as usize
    }

    /// `floor((len - frame_len) / hop) + 1`, or zero for clips shorter than a frame.
    pub fn frame_count(&self, samples: usize) -> usize {
        let fl = self.frame_len();
        if samples < fl {
            0
        } else {
            (samples - fl) / self.hop() + 1
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.sample_rate_hz > 0
            && self.frame_len() > 0
            && self.hop() > 0
            && self.n_fft >= self.frame_len()
            && self.n_filters > 0
            && self.f_min_hz >= 0.0
            && self.f_max_hz > self.f_min_hz
            && self.f_max_hz <= self.sample_rate_hz as f64 / 2.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("inconsistent frontend settings: {self:?}")))
        }
    }
}

/// `frames x dim` feature matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrames<T = f32> {
    data: Vec<T>,
    frames: usize,
    dim: usize,
}

impl<T: Real> FeatureFrames<T> {
    pub fn new(data: Vec<T>, frames: usize, dim: usize) -> Result<Self> {
        if frames == 0 || dim == 0 || data.len() != frames * dim {
            return Err(Error::invalid(format!(
                "feature matrix {frames}x{dim} does not match {} values",
                data.len()
            )));
        }
        Ok(Self { data, frames, dim })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, t: usize) -> &[T] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filters over the `n_fft / 2 + 1` power-spectrum bins.
fn mel_filterbank(cfg: &FrontendConfig) -> Vec<Vec<f64>> {
    let bins = cfg.n_fft / 2 + 1;
    let (lo, hi) = (hz_to_mel(cfg.f_min_hz), hz_to_mel(cfg.f_max_hz));
    let edges: Vec<f64> = (0..cfg.n_filters + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_filters + 1) as f64))
        .collect();
    (0..cfg.n_filters)
        .map(|m| {
            let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..bins)
                .map(|k| {
                    let f = k as f64 * cfg.sample_rate_hz as f64 / cfg.n_fft as f64;
                    if f <= l || f >= r {
                        0.0
                    } else if f <= c {
                        (f - l) / (c - l)
                    } else {
                        (r - f) / (r - c)
                    }
                })
                .collect()
        })
        .collect()
}

/// Hann-windowed log mel energies, normalized per utterance to zero mean and
/// unit variance in each dimension. Dimensions with no variance become zero.
pub fn extract_features<S: Real, T: Real>(clip: &AudioClip<S>, cfg: &FrontendConfig) -> Result<FeatureFrames<T>> {
    cfg.validate()?;
    if clip.sample_rate_hz() != cfg.sample_rate_hz {
        return Err(Error::invalid(format!(
            "clip sampled at {} Hz, frontend expects {} Hz",
            clip.sample_rate_hz(),
            cfg.sample_rate_hz
        )));
    }
    let frames = cfg.frame_count(clip.len());
    if frames == 0 {
        return Err(Error::invalid(format!(
            "clip of {} samples is shorter than one {} ms frame",
            clip.len(),
            cfg.frame_len_ms
        )));
    }
    let (fl, hop, dim) = (cfg.frame_len(), cfg.hop(), cfg.n_filters);
    let window: Vec<f64> = (0..fl)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / fl as f64).cos())
        .collect();
    let bank = mel_filterbank(cfg);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.n_fft);
    let samples = clip.samples();

    let mut feats = vec![0.0f64; frames * dim];
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.n_fft];
    let mut power = vec![0.0f64; cfg.n_fft / 2 + 1];
    for t in 0..frames {
        buf.fill(Complex::new(0.0, 0.0));
        for (i, w) in window.iter().enumerate() {
            buf[i].re = samples[t * hop + i].as_f64() * w;
        }
        fft.process(&mut buf);
        for (p, c) in power.iter_mut().zip(&buf) {
            *p = c.norm_sqr();
        }
        for (m, filt) in bank.iter().enumerate() {
            let e: f64 = filt.iter().zip(&power).map(|(a, b)| a * b).sum();
            feats[t * dim + m] = (e + 1e-10).ln();
        }
    }
    for m in 0..dim {
        let mean = (0..frames).map(|t| feats[t * dim + m]).sum::<f64>() / frames as f64;
        let var = (0..frames).map(|t| (feats[t * dim + m] - mean).powi(2)).sum::<f64>() / frames as f64;
        let scale = if var > 1e-12 { 1.0 / var.sqrt() } else { 0.0 };
        for t in 0..frames {
            feats[t * dim + m] = (feats[t * dim + m] - mean) * scale;
        }
    }
    FeatureFrames::new(feats.into_iter().map(T::lit).collect(), frames, dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(hz: f64, secs: f64) -> AudioClip<f64> {
        let n = (secs * 16_000.0) as usize;
        AudioClip::new(
            (0..n).map(|i| 0.5 * (2.0 * PI * hz * i as f64 / 16_000.0).sin()).collect(),
            16_000,
        )
        .unwrap()
    }

    #[test]
    fn one_second_gives_98_frames() {
        let f: FeatureFrames<f64> = extract_features(&sine(440.0, 1.0), &FrontendConfig::default()).unwrap();
        assert_eq!(f.frames(), 98);
        assert_eq!(f.dim(), 26);
        assert!(f.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn zero_clip_normalizes_to_zeros() {
        let clip = AudioClip::new(vec![0.0; 4000], 16_000).unwrap();
        let f: FeatureFrames<f32> = extract_features(&clip, &FrontendConfig::default()).unwrap();
        assert!(f.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn features_are_deterministic_and_normalized() {
        let cfg = FrontendConfig::default();
        let clip = sine(1000.0, 0.3);
        let a: FeatureFrames<f64> = extract_features(&clip, &cfg).unwrap();
        let b: FeatureFrames<f64> = extract_features(&clip.clone(), &cfg).unwrap();
        assert_eq!(a, b);
        for m in 0..a.dim() {
            let mean: f64 = (0..a.frames()).map(|t| a.row(t)[m]).sum::<f64>() / a.frames() as f64;
            assert!(mean.abs() < 1e-9);
        }
    }

    #[test]
    fn short_clip_and_wrong_rate_rejected() {
        let cfg = FrontendConfig::default();
        let short = AudioClip::new(vec![0.1; 399], 16_000).unwrap();
        assert!(extract_features::<f64, f32>(&short, &cfg).is_err());
        let exact = AudioClip::new(vec![0.1; 400], 16_000).unwrap();
        assert_eq!(extract_features::<f64, f32>(&exact, &cfg).unwrap().frames(), 1);
        let other = AudioClip::new(vec![0.1; 8000], 8_000).unwrap();
        assert!(extract_features::<f64, f32>(&other, &cfg).is_err());
    }

    #[test]
    fn filterbank_peaks_follow_frequency() {
        // a tone's strongest unnormalized band rises with its frequency
        let cfg = FrontendConfig::default();
        let bank = mel_filterbank(&cfg);
        let peak = |hz: f64| {
            let k = (hz * cfg.n_fft as f64 / 16_000.0).round() as usize;
            (0..bank.len()).max_by(|&a, &b| bank[a][k].total_cmp(&bank[b][k])).unwrap()
        };
        assert!(peak(300.0) < peak(1000.0));
        assert!(peak(1000.0) < peak(5000.0));
    }
}
