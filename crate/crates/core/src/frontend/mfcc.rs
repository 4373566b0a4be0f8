use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

/// Static cepstral coefficients per frame (c0..c12).
pub const N_CEPS: usize = 13;
/// Statics plus deltas plus delta-deltas.
pub const N_MFCC: usize = 3 * N_CEPS;

const N_FFT: usize = 512;
const N_BANDS: usize = 26;
const LOG_FLOOR: f64 = 1e-10;

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filterbank with natural-log band energies and an
/// orthonormal DCT-II.
pub struct MelFilterbank {
    fft: Arc<dyn Fft<f64>>,
    filters: Vec<Vec<(usize, f64)>>,
}

impl MelFilterbank {
    pub fn new(sample_rate: u32) -> Self {
        let nyquist = sample_rate as f64 / 2.0;
        let mel_max = hz_to_mel(nyquist);
        let edges: Vec<f64> = (0..N_BANDS + 2)
            .map(|i| mel_to_hz(mel_max * i as f64 / (N_BANDS + 1) as f64))
            .collect();
        let bin_hz = sample_rate as f64 / N_FFT as f64;
        let filters = (0..N_BANDS)
            .map(|b| {
                let (lo, mid, hi) = (edges[b], edges[b + 1], edges[b + 2]);
                (0..=N_FFT / 2)
                    .filter_map(|k| {
                        let f = k as f64 * bin_hz;
                        let w = if f > lo && f <= mid {
                            (f - lo) / (mid - lo)
                        } else if f > mid && f < hi {
                            (hi - f) / (hi - mid)
                        } else {
                            0.0
                        };
                        (w > 0.0).then_some((k, w))
                    })
                    .collect()
            })
            .collect();
        Self {
            fft: FftPlanner::new().plan_fft_forward(N_FFT),
            filters,
        }
    }

    pub fn log_energies(&self, frame: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = frame.iter().take(N_FFT).map(|&s| Complex::new(s, 0.0)).collect();
        buf.resize(N_FFT, Complex::new(0.0, 0.0));
        self.fft.process(&mut buf);
        self.filters
            .iter()
            .map(|f| {
                let e: f64 = f.iter().map(|&(k, w)| w * buf[k].norm_sqr()).sum();
                e.max(LOG_FLOOR).ln()
            })
            .collect()
    }

    /// First `n_ceps` cepstral coefficients (c0 first).
    pub fn cepstrum(&self, frame: &[f64], n_ceps: usize) -> Vec<f64> {
        dct2(&self.log_energies(frame), n_ceps)
    }
}

fn dct2(x: &[f64], n_out: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..n_out)
        .map(|k| {
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            scale
                * x.iter()
                    .enumerate()
                    .map(|(m, v)| v * (PI * k as f64 * (m as f64 + 0.5) / n).cos())
                    .sum::<f64>()
        })
        .collect()
}

/// Per-frame 39-dimensional MFCC vectors (mean-normalized statics, deltas,
/// delta-deltas).
#[derive(Debug, Clone, PartialEq)]
pub struct AcousticFeatures {
    pub frames: Vec<Vec<f64>>,
}

impl AcousticFeatures {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// The 13 mean-normalized static coefficients of each frame.
    pub fn statics(&self) -> Vec<Vec<f64>> {
        self.frames.iter().map(|f| f[..N_CEPS].to_vec()).collect()
    }
}

pub fn compute_mfcc(frames: &[Vec<f64>], sample_rate: u32) -> AcousticFeatures {
    let bank = MelFilterbank::new(sample_rate);
    let mut statics: Vec<Vec<f64>> = frames.iter().map(|f| bank.cepstrum(f, N_CEPS)).collect();
    if !statics.is_empty() {
        let n = statics.len() as f64;
        let mut mean = [0.0; N_CEPS];
        for row in &statics {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        for row in &mut statics {
            for (v, m) in row.iter_mut().zip(&mean) {
                *v -= m;
            }
        }
    }
    let d1 = deltas(&statics);
    let d2 = deltas(&d1);
    let frames = statics
        .into_iter()
        .zip(d1)
        .zip(d2)
        .map(|((mut s, a), b)| {
            s.extend(a);
            s.extend(b);
            s
        })
        .collect();
    AcousticFeatures { frames }
}

/// Regression deltas over a +/-2 frame window with edge replication.
pub fn deltas(track: &[Vec<f64>]) -> Vec<Vec<f64>> {
    const N: isize = 2;
    let denom = 2.0 * (1..=N).map(|n| (n * n) as f64).sum::<f64>();
    let last = track.len() as isize - 1;
    let at = |i: isize| &track[i.clamp(0, last) as usize];
    (0..track.len() as isize)
        .map(|t| {
            let dim = track[t as usize].len();
            (0..dim)
                .map(|d| (1..=N).map(|n| n as f64 * (at(t + n)[d] - at(t - n)[d])).sum::<f64>() / denom)
                .collect()
        })
        .collect()
}

/// Concatenates each frame with its `(context - 1) / 2` neighbours on each
/// side, replicating boundary frames at the edges.
pub fn stack_context(frames: &[Vec<f64>], context: usize) -> Vec<Vec<f64>> {
    assert!(context % 2 == 1, "context must be odd");
    if frames.is_empty() {
        return Vec::new();
    }
    let half = (context / 2) as isize;
    let last = frames.len() as isize - 1;
    (0..frames.len() as isize)
        .map(|t| {
            (t - half..=t + half)
                .flat_map(|i| frames[i.clamp(0, last) as usize].iter().copied())
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::AudioClip;
    use crate::frontend::{frame_signal, FrameGrid};

    fn sine(freq: f64, n: usize) -> AudioClip {
        AudioClip::new(
            (0..n)
                .map(|i| 0.5 * (2.0 * PI * freq * i as f64 / 16_000.0).sin())
                .collect(),
            16_000,
        )
        .unwrap()
    }

    #[test]
    fn sine_cepstrum_is_finite_and_c0_dominates() {
        let grid = FrameGrid::new(16).unwrap();
        let frames = frame_signal(&sine(1000.0, 8000), &grid);
        let bank = MelFilterbank::new(16_000);
        for f in &frames {
            let c = bank.cepstrum(f, N_CEPS);
            assert!(c.iter().all(|v| v.is_finite()));
            assert!(c[1..].iter().all(|v| v.abs() < c[0].abs()));
        }
        let feats = compute_mfcc(&frames, 16_000);
        assert!(feats.frames.iter().flatten().all(|v| v.is_finite()));
        assert_eq!(feats.frames[0].len(), N_MFCC);
    }

    #[test]
    fn identical_frames_give_identical_rows() {
        let grid = FrameGrid::new(16).unwrap();
        let frame = frame_signal(&sine(440.0, 400), &grid).remove(0);
        let feats = compute_mfcc(&[frame.clone(), frame], 16_000);
        assert_eq!(feats.frames[0], feats.frames[1]);
    }

    #[test]
    fn silence_is_floor_clamped() {
        let bank = MelFilterbank::new(16_000);
        let c = bank.cepstrum(&[0.0; 400], N_CEPS);
        assert!((c[0] - LOG_FLOOR.ln() * (N_BANDS as f64).sqrt()).abs() < 1e-9);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn constant_track_has_zero_deltas() {
        let track = vec![vec![1.5, -2.0, 0.25]; 7];
        assert!(deltas(&track).iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn deltas_of_ramp_are_slope_in_interior() {
        let track: Vec<Vec<f64>> = (0..10).map(|t| vec![3.0 * t as f64]).collect();
        let d = deltas(&track);
        for row in &d[2..8] {
            assert!((row[0] - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn context_stacking_dimensions() {
        let mfcc = vec![vec![0.0; 39]; 5];
        assert!(stack_context(&mfcc, 9).iter().all(|v| v.len() == 351));
        let bits = vec![vec![1.0; 12]; 5];
        assert!(stack_context(&bits, 11).iter().all(|v| v.len() == 132));
        assert!(stack_context(&[], 9).is_empty());
    }

    #[test]
    fn single_frame_context_replicates() {
        let frame = vec![1.0, 2.0, 3.0];
        let stacked = stack_context(std::slice::from_ref(&frame), 9);
        assert_eq!(stacked.len(), 1);
        assert_eq!(stacked[0], frame.repeat(9));
    }

    #[test]
    fn context_is_centered() {
        let frames: Vec<Vec<f64>> = (0..6).map(|t| vec![t as f64]).collect();
        let stacked = stack_context(&frames, 3);
        assert_eq!(stacked[0], vec![0.0, 0.0, 1.0]);
        assert_eq!(stacked[3], vec![2.0, 3.0, 4.0]);
        assert_eq!(stacked[5], vec![4.0, 5.0, 5.0]);
    }
}
