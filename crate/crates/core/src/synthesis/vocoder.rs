//! Source-filter LPC vocoder.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::analysis::{gain_floor, SpeechParams};
use super::lpc::AllPole;
use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::frontend::{F0Track, FrameGrid};

pub const OUTPUT_PEAK: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VocoderConfig {
    /// Seed of the noise excitation.
    pub seed: u64,
    /// Samples filtered before each frame's region to settle the filter state.
    pub warmup: usize,
}

impl Default for VocoderConfig {
    fn default() -> Self {
        Self { seed: 7, warmup: 240 }
    }
}

/// Sample rate-relative frame centres, in samples.
fn frame_centers(grid: &FrameGrid, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (i * grid.hop_len()) as f64 + grid.window_len() as f64 / 2.0)
        .collect()
}

/// Linear interpolation of per-frame values onto samples, held at the edges.
fn interpolate(values: &[f64], centers: &[f64], len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    let mut j = 0;
    for s in 0..len {
        let t = s as f64;
        while j + 1 < centers.len() && centers[j + 1] <= t {
            j += 1;
        }
        let v = if t <= centers[0] {
            values[0]
        } else if j + 1 >= centers.len() {
            values[values.len() - 1]
        } else {
            let w = (t - centers[j]) / (centers[j + 1] - centers[j]);
            values[j] * (1.0 - w) + values[j + 1] * w
        };
        out.push(v);
    }
    out
}

/// Sample positions of glottal pulses under a phase-continuous oscillator
/// following the per-frame F0 (Hz).
pub fn pulse_positions(f0_hz: &[f64], grid: &FrameGrid) -> Vec<usize> {
    let n = f0_hz.len();
    if n == 0 {
        return Vec::new();
    }
    let len = grid.span_samples(n);
    let per_sample = interpolate(f0_hz, &frame_centers(grid, n), len);
    let sr = grid.sample_rate as f64;
    // the oscillator starts on a pulse
    let mut phase: f64 = 1.0;
    let mut out = Vec::new();
    for (s, f) in per_sample.iter().enumerate() {
        if phase >= 1.0 {
            out.push(s);
            phase -= phase.floor();
        }
        phase += f.max(0.0) / sr;
    }
    out
}

/// Crossfade weight of frame `i` at sample `s`: Hann ramps of shift length
/// between neighbouring frame centres, flat beyond the outermost centres.
fn crossfade(i: usize, n: usize, centers: &[f64], hop: f64, s: f64) -> f64 {
    let d = s - centers[i];
    if (d < 0.0 && i == 0) || (d >= 0.0 && i + 1 == n) {
        return 1.0;
    }
    if d.abs() >= hop {
        return 0.0;
    }
    (0.5 * PI * d / hop).cos().powi(2)
}

/// Renders speech parameters with the decoded F0 track.
pub fn vocode(params: &SpeechParams, f0: &F0Track, grid: &FrameGrid, cfg: &VocoderConfig) -> Result<AudioClip> {
    let n = params.len();
    if f0.len() != n {
        return Err(Error::dimension(n, f0.len()));
    }
    let len = grid.span_samples(n);
    if n == 0 {
        return AudioClip::new(Vec::new(), grid.sample_rate);
    }
    let hz = f0.hz();
    let sr = grid.sample_rate as f64;
    let centers = frame_centers(grid, n);
    let f0_samples = interpolate(&hz, &centers, len);

    let mut pulses = vec![0.0; len];
    for p in pulse_positions(&hz, grid) {
        // unit mean power: an impulse of height sqrt(T0) once per period
        pulses[p] = (sr / f0_samples[p].max(1.0)).sqrt();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();

    let hop = grid.hop_len() as f64;
    let floor = gain_floor();
    let mut out = vec![0.0; len];
    for (i, frame) in params.frames.iter().enumerate() {
        if frame.gain <= floor + 1e-9 {
            continue;
        }
        let lo = if i == 0 {
            0
        } else {
            (centers[i] - hop).ceil().max(0.0) as usize
        };
        let hi = if i + 1 == n {
            len
        } else {
            ((centers[i] + hop).ceil() as usize).min(len)
        };
        if lo >= hi {
            continue;
        }
        let harmonic = 1.0 / (1.0 + (-frame.hnr).exp());
        let (wv, wn) = (harmonic.sqrt(), (1.0 - harmonic).sqrt());
        let scale = (0.5 * frame.gain).exp();
        let mut glottal = AllPole::new(&frame.glottal_poly());
        let mut tract = AllPole::new(&frame.lpc());
        for s in lo.saturating_sub(cfg.warmup)..hi {
            let e = wv * pulses[s] + wn * noise[s];
            let y = tract.step(glottal.step(e));
            if s >= lo {
                out[s] += scale * y * crossfade(i, n, &centers, hop, s as f64);
            }
        }
    }

    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 && peak.is_finite() {
        out.iter_mut().for_each(|v| *v *= OUTPUT_PEAK / peak);
    }
    AudioClip::new(out, grid.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::super::analysis::{extract_speech_params, FrameParams};
    use super::*;
    use crate::metrics::mcd;

    fn params(n: usize, gain: f64) -> SpeechParams {
        let mut f = FrameParams::silent();
        f.gain = gain;
        f.hnr = 3.0;
        SpeechParams { frames: vec![f; n] }
    }

    #[test]
    fn output_length_matches_grid() {
        for shift in [10, 16, 20] {
            let grid = FrameGrid::new(shift).unwrap();
            for n in [1, 2, 17] {
                let clip = vocode(
                    &params(n, -4.0),
                    &F0Track::from_log_f0(vec![4.8; n]),
                    &grid,
                    &VocoderConfig::default(),
                )
                .unwrap();
                assert_eq!(clip.len(), n * grid.hop_len() + grid.window_len() - grid.hop_len());
            }
        }
    }

    #[test]
    fn floor_gain_is_silent() {
        let grid = FrameGrid::new(10).unwrap();
        let clip = vocode(
            &params(30, gain_floor()),
            &F0Track::from_log_f0(vec![4.8; 30]),
            &grid,
            &VocoderConfig::default(),
        )
        .unwrap();
        assert!(clip.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_is_peak_normalized() {
        let grid = FrameGrid::new(10).unwrap();
        let clip = vocode(
            &params(30, -2.0),
            &F0Track::from_log_f0(vec![4.8; 30]),
            &grid,
            &VocoderConfig::default(),
        )
        .unwrap();
        let peak = clip.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - OUTPUT_PEAK).abs() < 1e-12);
    }

    #[test]
    fn misaligned_f0_is_rejected() {
        let grid = FrameGrid::new(10).unwrap();
        let r = vocode(
            &params(5, -2.0),
            &F0Track::from_log_f0(vec![4.8; 4]),
            &grid,
            &VocoderConfig::default(),
        );
        assert!(matches!(r, Err(Error::Dimension { .. })));
    }

    #[test]
    fn doubling_f0_doubles_pulses_per_frame() {
        let grid = FrameGrid::new(16).unwrap();
        let base = vec![125.0; 50];
        let doubled: Vec<f64> = base.iter().map(|v| 2.0 * v).collect();
        let count = |p: &[usize], lo: usize, hi: usize| p.iter().filter(|&&s| s >= lo && s < hi).count();
        let (a, b) = (pulse_positions(&base, &grid), pulse_positions(&doubled, &grid));
        let hop = grid.hop_len();
        for i in 0..50 {
            // a 16 ms frame holds exactly 2 pulses at 125 Hz
            assert_eq!(count(&a, i * hop, (i + 1) * hop), 2);
            assert_eq!(count(&b, i * hop, (i + 1) * hop), 4);
        }
    }

    #[test]
    fn pulses_are_phase_continuous() {
        let grid = FrameGrid::new(10).unwrap();
        let f0: Vec<f64> = (0..100).map(|i| 100.0 + i as f64).collect();
        let p = pulse_positions(&f0, &grid);
        for w in p.windows(2) {
            let gap = w[1] - w[0];
            assert!((70..=161).contains(&gap), "gap {gap}");
        }
    }

    #[test]
    fn roundtrip_of_synthetic_vowel_is_close() {
        use super::super::lpc::{poly_from_pole_pairs, AllPole};
        let grid = FrameGrid::new(10).unwrap();
        let formants = [
            (0.97, 2.0 * PI * 700.0 / 16000.0),
            (0.96, 2.0 * PI * 1200.0 / 16000.0),
            (0.95, 2.0 * PI * 2500.0 / 16000.0),
        ];
        let a = poly_from_pole_pairs(&formants);
        let mut glottis = AllPole::new(&[1.0, -1.94, 0.9409]);
        let mut tract = AllPole::new(&a);
        // glottal low-pass, vocal tract, then lip radiation
        let g: Vec<f64> = (0..16000)
            .map(|s| tract.step(glottis.step(if s % 133 == 0 { 1.0 } else { 0.0 })))
            .collect();
        let x: Vec<f64> = (0..g.len())
            .map(|s| g[s] - if s > 0 { g[s - 1] } else { 0.0 })
            .collect();
        let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let clip = AudioClip::new(x.iter().map(|v| 0.7 * v / peak).collect(), 16_000).unwrap();
        let n = grid.n_frames(clip.len());
        let f0 = F0Track::from_log_f0(vec![(16000.0f64 / 133.0).ln(); n]);
        let p = extract_speech_params(&clip, &grid, &f0).unwrap();
        let y = vocode(&p, &f0, &grid, &VocoderConfig::default()).unwrap();
        let d = mcd(&clip, &y).unwrap();
        assert!(d > 0.0 && d <= 6.0, "mcd {d}");
    }
}
