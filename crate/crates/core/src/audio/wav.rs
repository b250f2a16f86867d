use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::AudioClip;
use crate::error::{Error, Result};

const FULL_SCALE: f64 = 32_768.0;

/// Outcome of writing a clip as 16-bit PCM.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WavWriteSummary {
    pub samples: usize,
    /// Samples outside `[-1, 1]` that were clamped on export.
    pub clipped: usize,
}

fn map_hound(path: &Path, err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(e) => Error::io(path, e),
        other => Error::WavFormat(format!("{}: {other}", path.display())),
    }
}

/// Reads a 16-bit PCM mono WAV file into `[-1, 1)` amplitudes.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip<f64>> {
    let path = path.as_ref();
    let reader = WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::WavFormat(format!(
            "{}: expected mono, found {} channels",
            path.display(),
            spec.channels
        )));
    }
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::WavFormat(format!(
            "{}: expected 16-bit integer PCM, found {}-bit {:?}",
            path.display(),
            spec.bits_per_sample,
            spec.sample_format
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| f64::from(v) / FULL_SCALE))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| map_hound(path, e))?;
    AudioClip::new(samples, spec.sample_rate)
}

/// Writes a clip as 16-bit PCM mono, clamping to `[-1, 1]`.
pub fn write_wav(clip: &AudioClip<f64>, path: impl AsRef<Path>) -> Result<WavWriteSummary> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate_hz(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    let mut clipped = 0;
    for &v in clip.samples() {
        if !(-1.0..=1.0).contains(&v) {
            clipped += 1;
        }
        let q = (v.clamp(-1.0, 1.0) * FULL_SCALE).round().clamp(-FULL_SCALE, FULL_SCALE - 1.0);
        writer.write_sample(q as i16).map_err(|e| map_hound(path, e))?;
    }
    writer.finalize().map_err(|e| map_hound(path, e))?;
    Ok(WavWriteSummary {
        samples: clip.len(),
        clipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::SAMPLE_RATE_HZ;

    #[test]
    fn sine_roundtrip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sine.wav");
        let samples: Vec<f64> = (0..16_000)
            .map(|i| 0.5 * (2.0 * std::f64::consts::PI * 440.0 * i as f64 / 16_000.0).sin())
            .collect();
        let clip = AudioClip::new(samples, SAMPLE_RATE_HZ).unwrap();
        let summary = write_wav(&clip, &path).unwrap();
        assert_eq!(summary.clipped, 0);
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate_hz(), SAMPLE_RATE_HZ);
        assert_eq!(back.len(), clip.len());
        for (a, b) in clip.samples().iter().zip(back.samples()) {
            assert!((a - b).abs() <= 2f64.powi(-15));
        }
    }

    #[test]
    fn zeros_roundtrip_exactly_and_full_scale_is_bounded() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("z.wav");
        let clip = AudioClip::new(vec![0.0; 100], SAMPLE_RATE_HZ).unwrap();
        write_wav(&clip, &path).unwrap();
        assert!(read_wav(&path).unwrap().samples().iter().all(|&v| v == 0.0));

        let clip = AudioClip::new(vec![1.0, -1.0], SAMPLE_RATE_HZ).unwrap();
        write_wav(&clip, &path).unwrap();
        let back = read_wav(&path).unwrap();
        assert!((back.samples()[0] - 1.0).abs() <= 2f64.powi(-15));
        assert_eq!(back.samples()[1], -1.0);
    }

    #[test]
    fn out_of_range_samples_are_clamped_and_counted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.wav");
        let clip = AudioClip::new(vec![0.25, 1.5, -0.25], SAMPLE_RATE_HZ).unwrap();
        let summary = write_wav(&clip, &path).unwrap();
        assert_eq!(summary.clipped, 1);
        let back = read_wav(&path).unwrap();
        assert!((back.samples()[1] - 1.0).abs() <= 2f64.powi(-15));
    }

    #[test]
    fn stereo_and_wrong_depth_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let stereo = dir.path().join("s.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 16_000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&stereo, spec).unwrap();
        w.write_sample(0i16).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        assert!(matches!(read_wav(&stereo), Err(Error::WavFormat(_))));

        let deep = dir.path().join("d.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 16_000,
            bits_per_sample: 24,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&deep, spec).unwrap();
        w.write_sample(0i32).unwrap();
        w.finalize().unwrap();
        assert!(matches!(read_wav(&deep), Err(Error::WavFormat(_))));

        let junk = dir.path().join("j.wav");
        std::fs::write(&junk, b"RIFFnot really a wav").unwrap();
        assert!(matches!(read_wav(&junk), Err(Error::WavFormat(_))));
    }
}
