//! Short-time objective intelligibility.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::audio::AudioClip;
use crate::error::{Error, Result};

pub const STOI_RATE: u32 = 10_000;
const FRAME_LEN: usize = 256;
const HOP: usize = FRAME_LEN / 2;
const N_FFT: usize = 512;
const N_BANDS: usize = 15;
const LOWEST_CENTER_HZ: f64 = 150.0;
/// Frames per intermediate-intelligibility segment (384 ms).
const SEGMENT_FRAMES: usize = 30;
/// Lower signal-to-distortion bound in dB.
const BETA_DB: f64 = -15.0;
const DYNAMIC_RANGE_DB: f64 = 40.0;
const EPS: f64 = 1e-12;

/// Hann window without the zero end points.
fn hann(n: usize) -> Vec<f64> {
    (1..=n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n + 1) as f64).cos())
        .collect()
}

fn frame_starts(len: usize) -> impl Iterator<Item = usize> {
    (0..).map(|i| i * HOP).take_while(move |s| s + FRAME_LEN <= len)
}

/// Drops frames more than 40 dB below the loudest reference frame from
/// both signals and re-synthesizes them by overlap-add.
fn remove_silent_frames(x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let w = hann(FRAME_LEN);
    let starts: Vec<usize> = frame_starts(x.len()).collect();
    let energy: Vec<f64> = starts
        .iter()
        .map(|&s| {
            let e: f64 = (0..FRAME_LEN).map(|i| (w[i] * x[s + i]).powi(2)).sum();
            20.0 * (e.sqrt() + EPS).log10()
        })
        .collect();
    let max = energy.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<usize> = starts
        .iter()
        .zip(&energy)
        .filter(|(_, &e)| e > max - DYNAMIC_RANGE_DB)
        .map(|(&s, _)| s)
        .collect();
    let out_len = if kept.is_empty() {
        0
    } else {
        (kept.len() - 1) * HOP + FRAME_LEN
    };
    let mut xs = vec![0.0; out_len];
    let mut ys = vec![0.0; out_len];
    for (j, &s) in kept.iter().enumerate() {
        for i in 0..FRAME_LEN {
            xs[j * HOP + i] += w[i] * x[s + i];
            ys[j * HOP + i] += w[i] * y[s + i];
        }
    }
    (xs, ys)
}

/// Band edges as FFT bin ranges [lo, hi) of the one-third octave bands.
fn third_octave_bins() -> Vec<(usize, usize)> {
    let bin_hz = STOI_RATE as f64 / N_FFT as f64;
    let nearest = |f: f64| -> usize { ((f / bin_hz).round() as usize).min(N_FFT / 2) };
    (0..N_BANDS)
        .map(|k| {
            let k = k as f64;
            let cf = LOWEST_CENTER_HZ * 2f64.powf(k / 3.0);
            let lo = (cf * LOWEST_CENTER_HZ * 2f64.powf((k - 1.0) / 3.0)).sqrt();
            let hi = (cf * LOWEST_CENTER_HZ * 2f64.powf((k + 1.0) / 3.0)).sqrt();
            (nearest(lo), nearest(hi))
        })
        .collect()
}

/// Band envelopes, `[band][frame]`.
fn band_envelopes(x: &[f64], bands: &[(usize, usize)]) -> Vec<Vec<f64>> {
    let w = hann(FRAME_LEN);
    let fft = FftPlanner::new().plan_fft_forward(N_FFT);
    let mut out = vec![Vec::new(); bands.len()];
    for s in frame_starts(x.len()) {
        let mut buf = vec![Complex::new(0.0, 0.0); N_FFT];
        for i in 0..FRAME_LEN {
            buf[i].re = w[i] * x[s + i];
        }
        fft.process(&mut buf);
        for (b, &(lo, hi)) in bands.iter().enumerate() {
            let e: f64 = buf[lo..hi].iter().map(|c| c.norm_sqr()).sum();
            out[b].push(e.sqrt());
        }
    }
    out
}

fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx.sqrt() * syy.sqrt() + EPS)
}

/// Intelligibility of `test` against `reference`, in [0, 1] for typical
/// signals (the correlation average can dip below 0 for adversarial ones).
pub fn stoi(reference: &AudioClip, test: &AudioClip) -> Result<f64> {
    let min_len = (0.384 * reference.sample_rate as f64) as usize;
    let n = reference.len().min(test.len());
    if n < min_len || test.sample_rate != reference.sample_rate {
        return Err(Error::TooShort(format!(
            "intelligibility needs at least 384 ms of audio at one rate, got {n} samples"
        )));
    }
    let x = crate::audio::resample(&reference.samples[..n], reference.sample_rate, STOI_RATE);
    let y = crate::audio::resample(&test.samples[..n], reference.sample_rate, STOI_RATE);
    let (x, y) = remove_silent_frames(&x, &y);
    let bands = third_octave_bins();
    let xb = band_envelopes(&x, &bands);
    let yb = band_envelopes(&y, &bands);
    let frames = xb[0].len();
    if frames < SEGMENT_FRAMES {
        return Err(Error::TooShort(format!(
            "only {frames} non-silent frames, need {SEGMENT_FRAMES}"
        )));
    }
    let clip = 1.0 + 10f64.powf(-BETA_DB / 20.0);
    let mut total = 0.0;
    let mut count = 0usize;
    for end in SEGMENT_FRAMES..=frames {
        for b in 0..N_BANDS {
            let xs = &xb[b][end - SEGMENT_FRAMES..end];
            let ys = &yb[b][end - SEGMENT_FRAMES..end];
            let nx = xs.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny = ys.iter().map(|v| v * v).sum::<f64>().sqrt();
            let alpha = nx / (ny + EPS);
            let yc: Vec<f64> = ys.iter().zip(xs).map(|(yv, xv)| (alpha * yv).min(clip * xv)).collect();
            total += correlation(xs, &yc);
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                0.1 * v
            })
            .collect()
    }

    /// Noise with a slow amplitude envelope, a crude speech stand-in.
    fn modulated(n: usize, seed: u64) -> AudioClip {
        let s = noise(n, seed)
            .into_iter()
            .enumerate()
            .map(|(i, v)| v * (1.0 + (2.0 * std::f64::consts::PI * 4.0 * i as f64 / 16000.0).sin()))
            .collect();
        AudioClip::new(s, 16_000).unwrap()
    }

    #[test]
    fn identical_signals_score_one() {
        let x = modulated(16000, 1);
        let d = stoi(&x, &x).unwrap();
        assert!((d - 1.0).abs() < 1e-9, "{d}");
    }

    #[test]
    fn independent_noise_scores_low() {
        let x = crate::corpus::generate_utterance(&crate::corpus::CorpusConfig::default(), 0).clip;
        let y = AudioClip::new(noise(x.len(), 2), 16_000).unwrap();
        let d = stoi(&x, &y).unwrap();
        assert!(d < 0.3, "{d}");
    }

    #[test]
    fn gain_invariant() {
        let x = modulated(24000, 3);
        let mut y = x.clone();
        for (v, n) in y.samples.iter_mut().zip(noise(24000, 4)) {
            *v += 0.5 * n;
        }
        let scaled = AudioClip::new(y.samples.iter().map(|v| 0.25 * v).collect(), 16_000).unwrap();
        let (a, b) = (stoi(&x, &y).unwrap(), stoi(&x, &scaled).unwrap());
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        assert!(a < 1.0 && a > 0.3);
    }

    #[test]
    fn short_clips_are_rejected() {
        let x = modulated(6000, 1);
        assert!(matches!(stoi(&x, &x), Err(Error::TooShort(_))));
    }

    #[test]
    fn bands_span_134hz_to_4277hz() {
        let b = third_octave_bins();
        assert_eq!(b.len(), 15);
        assert!(b.windows(2).all(|w| w[0].1 == w[1].0));
        let bin_hz = STOI_RATE as f64 / N_FFT as f64;
        assert!((b[0].0 as f64 * bin_hz - 133.6).abs() < bin_hz);
        assert!((b[14].1 as f64 * bin_hz - 4277.0).abs() < bin_hz);
    }
}
