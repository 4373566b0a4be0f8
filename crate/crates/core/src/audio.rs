//! Mono PCM audio buffers, WAV I/O and rational-ratio resampling.

use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};

/// Canonical codec sample rate.
pub const SAMPLE_RATE: u32 = 16_000;

/// Mono audio with samples normalized to [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::config("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::TooShort(format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_ms(&self) -> f64 {
        self.samples.len() as f64 * 1000.0 / self.sample_rate as f64
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_ms() / 1000.0
    }

    /// Returns the clip at `rate`, resampling when needed.
    pub fn resampled(&self, rate: u32) -> AudioClip {
        if rate == self.sample_rate {
            return self.clone();
        }
        AudioClip {
            samples: resample(&self.samples, self.sample_rate, rate),
            sample_rate: rate,
        }
    }

    /// Reads a 16-bit (or float) WAV file, mixes channels down to mono, and
    /// converts to the canonical 16 kHz rate.
    pub fn read_wav(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = hound::WavReader::open(path).map_err(|e| match e {
            hound::Error::IoError(io) if io.kind() == std::io::ErrorKind::NotFound => {
                Error::config_path("input file not found", path)
            }
            other => Error::Wav(other),
        })?;
        let spec = reader.spec();
        let channels = spec.channels.max(1) as usize;
        let interleaved: Vec<f64> = match spec.sample_format {
            hound::SampleFormat::Int => {
                let scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
                reader
                    .samples::<i32>()
                    .map(|s| s.map(|v| v as f64 / scale))
                    .collect::<std::result::Result<_, _>>()?
            }
            hound::SampleFormat::Float => reader
                .samples::<f32>()
                .map(|s| s.map(|v| v as f64))
                .collect::<std::result::Result<_, _>>()?,
        };
        let mono: Vec<f64> = interleaved
            .chunks(channels)
            .map(|c| c.iter().sum::<f64>() / channels as f64)
            .collect();
        let clip = AudioClip::new(mono, spec.sample_rate)?;
        Ok(clip.resampled(SAMPLE_RATE))
    }

    /// Writes 16-bit mono PCM.
    pub fn write_wav(&self, path: impl AsRef<Path>) -> Result<()> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut writer = hound::WavWriter::create(path, spec)?;
        for &s in &self.samples {
            let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            writer.write_sample(v)?;
        }
        writer.finalize()?;
        Ok(())
    }

    /// Quantizes to 16-bit and back, matching what a WAV roundtrip yields.
    pub fn quantized_16bit(&self) -> AudioClip {
        AudioClip {
            samples: self
                .samples
                .iter()
                .map(|&s| (s * 32768.0).round().clamp(-32768.0, 32767.0) / 32768.0)
                .collect(),
            sample_rate: self.sample_rate,
        }
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Polyphase windowed-sinc resampler for an arbitrary rational ratio.
///
/// Output length is `ceil(len * to / from)`.
pub fn resample(input: &[f64], from: u32, to: u32) -> Vec<f64> {
    if from == to || input.is_empty() {
        return input.to_vec();
    }
    let g = gcd(from as u64, to as u64);
    let up = (to as u64 / g) as usize;
    let down = (from as u64 / g) as usize;
    // cutoff in cycles per input sample
    let ratio = (up as f64 / down as f64).min(1.0);
    let cutoff = 0.5 * ratio * 0.94;
    let half_taps = (12.0 / ratio).ceil() as isize;
    let taps = (2 * half_taps) as usize;

    // phase p corresponds to fractional offset p/up of an input sample
    let table: Vec<Vec<f64>> = (0..up)
        .map(|p| {
            let frac = p as f64 / up as f64;
            (0..taps)
                .map(|t| {
                    let j = t as isize - half_taps + 1;
                    let tau = frac - j as f64;
                    let w = tau / (half_taps as f64);
                    let window = if w.abs() >= 1.0 {
                        0.0
                    } else {
                        // Blackman over [-1, 1]
                        0.42 + 0.5 * (PI * w).cos() + 0.08 * (2.0 * PI * w).cos()
                    };
                    2.0 * cutoff * sinc(2.0 * cutoff * tau) * window
                })
                .collect()
        })
        .collect();

    let out_len = (input.len() as u64 * up as u64).div_ceil(down as u64) as usize;
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len {
        let pos = n * down;
        let base = (pos / up) as isize;
        let phase = pos % up;
        let coeffs = &table[phase];
        let mut acc = 0.0;
        for (t, &c) in coeffs.iter().enumerate() {
            let idx = base + t as isize - half_taps + 1;
            if idx >= 0 && (idx as usize) < input.len() {
                acc += c * input[idx as usize];
            }
        }
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, rate: u32, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| (2.0 * PI * freq * i as f64 / rate as f64).sin())
            .collect()
    }

    #[test]
    fn resample_preserves_in_band_tone() {
        let x = tone(440.0, 16_000, 16_000);
        let y = resample(&x, 16_000, 10_000);
        assert_eq!(y.len(), 10_000);
        let expected = tone(440.0, 10_000, 10_000);
        let max_err = y[200..9800]
            .iter()
            .zip(&expected[200..9800])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 5e-3, "max_err {max_err}");
    }

    #[test]
    fn resample_upsamples_to_16k() {
        let x = tone(300.0, 8_000, 8_000);
        let y = resample(&x, 8_000, 16_000);
        assert_eq!(y.len(), 16_000);
        let expected = tone(300.0, 16_000, 16_000);
        let max_err = y[400..15600]
            .iter()
            .zip(&expected[400..15600])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 5e-3, "max_err {max_err}");
    }

    #[test]
    fn rejects_non_finite_samples() {
        assert!(AudioClip::new(vec![0.0, f64::NAN], 16_000).is_err());
        assert!(AudioClip::new(vec![0.0], 0).is_err());
    }

    #[test]
    fn wav_roundtrip_is_16bit_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        let clip = AudioClip::new(tone(200.0, 16_000, 1600), 16_000).unwrap();
        clip.write_wav(&path).unwrap();
        let back = AudioClip::read_wav(&path).unwrap();
        assert_eq!(back, clip.quantized_16bit());
    }
}
