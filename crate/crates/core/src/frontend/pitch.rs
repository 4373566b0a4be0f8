use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::FrameGrid;
use crate::audio::AudioClip;
use crate::error::{Error, Result};

pub const F0_MIN_HZ: f64 = 50.0;
pub const F0_MAX_HZ: f64 = 500.0;

/// Tunables of the autocorrelation pitch tracker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PitchConfig {
    pub min_hz: f64,
    pub max_hz: f64,
    /// Minimum normalized autocorrelation peak for a voiced frame.
    pub voicing_threshold: f64,
    /// Frames quieter than this (dB below the loudest frame) are unvoiced.
    pub silence_db: f64,
    /// Length of the correlation window in ms.
    pub correlation_ms: f64,
}

impl Default for PitchConfig {
    fn default() -> Self {
        Self {
            min_hz: F0_MIN_HZ,
            max_hz: F0_MAX_HZ,
            voicing_threshold: 0.3,
            silence_db: 40.0,
            correlation_ms: 20.0,
        }
    }
}

/// Continuous natural-log F0, one value per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct F0Track {
    pub log_f0: Vec<f64>,
    /// Voicing decision of the tracker; informational only.
    pub voicing_mask: Vec<bool>,
}

impl F0Track {
    pub fn len(&self) -> usize {
        self.log_f0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_f0.is_empty()
    }

    pub fn from_log_f0(log_f0: Vec<f64>) -> Self {
        let voicing_mask = vec![true; log_f0.len()];
        Self { log_f0, voicing_mask }
    }

    pub fn hz(&self) -> Vec<f64> {
        self.log_f0.iter().map(|v| v.exp()).collect()
    }
}

struct FrameEstimate {
    // cycles per sample
    freq: f64,
    strength: f64,
    energy: f64,
}

fn analyze_frame(x: &[f64], center: usize, corr_len: usize, min_lag: usize, max_lag: usize) -> FrameEstimate {
    let start = center as isize - ((corr_len + max_lag) / 2) as isize;
    let at = |i: isize| -> f64 {
        if i < 0 || i as usize >= x.len() {
            0.0
        } else {
            x[i as usize]
        }
    };
    let seg: Vec<f64> = (0..(corr_len + max_lag + 2) as isize).map(|i| at(start + i)).collect();
    let e0: f64 = seg[..corr_len].iter().map(|v| v * v).sum();
    let energy = e0 / corr_len as f64;
    if e0 <= 0.0 {
        return FrameEstimate {
            freq: 0.0,
            strength: 0.0,
            energy,
        };
    }

    // normalized cross-correlation for lags min_lag-1 ..= max_lag+1
    let lo = min_lag.saturating_sub(1).max(1);
    let hi = max_lag + 1;
    let mut r = vec![0.0; hi + 1];
    let mut lagged: f64 = seg[lo..lo + corr_len].iter().map(|v| v * v).sum();
    for lag in lo..=hi {
        if lag > lo {
            lagged += seg[lag + corr_len - 1].powi(2) - seg[lag - 1].powi(2);
        }
        let cross: f64 = seg[..corr_len]
            .iter()
            .zip(&seg[lag..lag + corr_len])
            .map(|(a, b)| a * b)
            .sum();
        let denom = (e0 * lagged.max(0.0)).sqrt();
        r[lag] = if denom > 0.0 { cross / denom } else { 0.0 };
    }

    let peaks: Vec<usize> = (min_lag.max(lo + 1)..=max_lag)
        .filter(|&l| r[l] > 0.0 && r[l] >= r[l - 1] && r[l] >= r[l + 1])
        .collect();
    let best = peaks.iter().map(|&l| r[l]).fold(0.0, f64::max);
    // smallest lag close to the global best avoids sub-octave picks
    let Some(&lag) = peaks.iter().find(|&&l| r[l] >= 0.9 * best) else {
        return FrameEstimate {
            freq: 0.0,
            strength: 0.0,
            energy,
        };
    };
    let (a, b, c) = (r[lag - 1], r[lag], r[lag + 1]);
    let denom = a - 2.0 * b + c;
    let offset = if denom.abs() > 1e-12 {
        (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    FrameEstimate {
        freq: 1.0 / (lag as f64 + offset),
        strength: b,
        energy,
    }
}

/// Per-frame F0 from normalized autocorrelation, with unvoiced frames filled
/// by linear interpolation of log-F0 and edges held at the nearest voiced
/// value.
pub fn extract_continuous_f0(clip: &AudioClip, grid: &FrameGrid, cfg: &PitchConfig) -> Result<F0Track> {
    let n = grid.n_frames(clip.len());
    let sr = clip.sample_rate as f64;
    let min_lag = (sr / cfg.max_hz).floor().max(2.0) as usize;
    let max_lag = (sr / cfg.min_hz).ceil() as usize;
    let corr_len = (cfg.correlation_ms * sr / 1000.0).round() as usize;
    let hop = grid.hop_len();
    let half_win = grid.window_len() / 2;

    let estimates: Vec<FrameEstimate> = (0..n)
        .into_par_iter()
        .map(|i| analyze_frame(&clip.samples, i * hop + half_win, corr_len, min_lag, max_lag))
        .collect();

    let loudest = estimates.iter().map(|e| e.energy).fold(0.0, f64::max);
    let gate = loudest * 10f64.powf(-cfg.silence_db / 10.0);
    let (lo, hi) = (cfg.min_hz.ln(), cfg.max_hz.ln());
    let voiced: Vec<Option<f64>> = estimates
        .iter()
        .map(|e| {
            (e.energy > gate && e.energy > 0.0 && e.strength >= cfg.voicing_threshold && e.freq > 0.0)
                .then(|| (e.freq * sr).ln().clamp(lo, hi))
        })
        .collect();

    let voicing_mask: Vec<bool> = voiced.iter().map(Option::is_some).collect();
    let log_f0 = interpolate_gaps(&voiced).ok_or(Error::NoVoicedSpeech)?;
    Ok(F0Track { log_f0, voicing_mask })
}

/// Fills `None` entries linearly between known neighbours; holds the edge
/// values outside the first and last known points.
fn interpolate_gaps(values: &[Option<f64>]) -> Option<Vec<f64>> {
    let known: Vec<(usize, f64)> = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .collect();
    let (&(first_i, first_v), &(last_i, last_v)) = (known.first()?, known.last()?);
    let mut out = vec![0.0; values.len()];
    out[..=first_i].fill(first_v);
    out[last_i..].fill(last_v);
    for w in known.windows(2) {
        let ((i0, v0), (i1, v1)) = (w[0], w[1]);
        for (i, slot) in out.iter_mut().enumerate().take(i1 + 1).skip(i0) {
            let a = (i - i0) as f64 / (i1 - i0) as f64;
            *slot = v0 + a * (v1 - v0);
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pulse_train(f0: f64, n: usize) -> Vec<f64> {
        let period = 16_000.0 / f0;
        let mut next = 0.0;
        let mut out = vec![0.0; n];
        for (i, s) in out.iter_mut().enumerate() {
            if i as f64 >= next {
                *s = 0.8;
                next += period;
            }
        }
        out
    }

    #[test]
    fn pulse_train_at_100hz() {
        let clip = AudioClip::new(pulse_train(100.0, 16_000), 16_000).unwrap();
        let grid = FrameGrid::new(16).unwrap();
        let track = extract_continuous_f0(&clip, &grid, &PitchConfig::default()).unwrap();
        assert_eq!(track.len(), 61);
        for (v, voiced) in track.log_f0.iter().zip(&track.voicing_mask) {
            assert!(v.is_finite());
            if *voiced {
                let hz = v.exp();
                assert!((hz - 100.0).abs() / 100.0 < 0.02, "got {hz}");
            }
        }
        assert!(track.voicing_mask.iter().filter(|&&v| v).count() > 50);
    }

    #[test]
    fn gap_between_equal_voiced_regions_interpolates_flat() {
        let mut x = pulse_train(120.0, 8000);
        x.extend(vec![0.0; 8000]);
        x.extend(pulse_train(120.0, 8000));
        let clip = AudioClip::new(x, 16_000).unwrap();
        let grid = FrameGrid::new(10).unwrap();
        let track = extract_continuous_f0(&clip, &grid, &PitchConfig::default()).unwrap();
        let mid = track.len() / 2;
        assert!(!track.voicing_mask[mid]);
        assert!((track.log_f0[mid] - 120f64.ln()).abs() < 0.02);
        assert!(track.log_f0.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn white_noise_has_no_voiced_speech() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x: Vec<f64> = (0..16_000).map(|_| rng.random_range(-0.5..0.5)).collect();
        let clip = AudioClip::new(x, 16_000).unwrap();
        let grid = FrameGrid::new(16).unwrap();
        let err = extract_continuous_f0(&clip, &grid, &PitchConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NoVoicedSpeech));
    }

    #[test]
    fn interpolation_holds_edges() {
        let filled = interpolate_gaps(&[None, Some(1.0), None, None, Some(4.0), None]).unwrap();
        assert_eq!(filled, vec![1.0, 1.0, 2.0, 3.0, 4.0, 4.0]);
        assert!(interpolate_gaps(&[None, None]).is_none());
    }
}
