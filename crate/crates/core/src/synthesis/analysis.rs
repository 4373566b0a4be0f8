//! Frame-level speech parameters for the LPC vocoder.

use std::f64::consts::PI;

use rayon::prelude::*;

use super::lpc::{autocorrelation, levinson, lpc_to_lsp, lsp_to_lpc, stabilize_lsp};
use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::frontend::{deltas, hamming, F0Track, FrameGrid};

pub const LPC_ORDER: usize = 24;
/// Static parameters per frame: LSPs, gain, HNR, glottal angle and log radius.
pub const N_STATIC: usize = LPC_ORDER + 4;
/// Statics plus deltas and delta-deltas.
pub const N_PARAMS: usize = 3 * N_STATIC;
/// Residual power floor; its log is the gain of silent frames.
pub const POWER_FLOOR: f64 = 1e-10;
const MAX_GLOTTAL_RADIUS: f64 = 0.999;
const MIN_GLOTTAL_RADIUS: f64 = 1e-2;
const PERIODICITY_CLAMP: f64 = 1e-3;

pub fn gain_floor() -> f64 {
    POWER_FLOOR.ln()
}

/// The 28 static parameters of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameParams {
    pub lsp: Vec<f64>,
    /// Log residual power.
    pub gain: f64,
    /// Log harmonic-to-noise power ratio.
    pub hnr: f64,
    pub glottal_angle: f64,
    pub glottal_log_mag: f64,
}

impl FrameParams {
    pub fn silent() -> Self {
        Self {
            lsp: super::lpc::uniform_lsp(LPC_ORDER),
            gain: gain_floor(),
            hnr: 0.0,
            glottal_angle: 0.0,
            glottal_log_mag: MIN_GLOTTAL_RADIUS.ln(),
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.lsp.clone();
        v.extend([self.gain, self.hnr, self.glottal_angle, self.glottal_log_mag]);
        v
    }

    /// Reads the first 28 values; LSPs are stabilized.
    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() < N_STATIC {
            return Err(Error::dimension(N_STATIC, v.len()));
        }
        let mut lsp = v[..LPC_ORDER].to_vec();
        stabilize_lsp(&mut lsp);
        let finite = |x: f64, default: f64| if x.is_finite() { x } else { default };
        Ok(Self {
            lsp,
            gain: finite(v[LPC_ORDER], gain_floor()),
            hnr: finite(v[LPC_ORDER + 1], 0.0),
            glottal_angle: finite(v[LPC_ORDER + 2], 0.0).clamp(0.0, std::f64::consts::PI),
            glottal_log_mag: finite(v[LPC_ORDER + 3], MIN_GLOTTAL_RADIUS.ln())
                .clamp(MIN_GLOTTAL_RADIUS.ln(), MAX_GLOTTAL_RADIUS.ln()),
        })
    }

    /// Vocal-tract predictor polynomial.
    pub fn lpc(&self) -> Vec<f64> {
        lsp_to_lpc(&self.lsp)
    }

    /// Second-order glottal polynomial with poles m e^{+-jt}.
    pub fn glottal_poly(&self) -> Vec<f64> {
        glottal_poly(self.glottal_angle, self.glottal_log_mag.exp())
    }
}

fn glottal_poly(angle: f64, radius: f64) -> Vec<f64> {
    vec![1.0, -2.0 * radius * angle.cos(), radius * radius]
}

/// Frame-synchronous speech parameters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpeechParams {
    pub frames: Vec<FrameParams>,
}

impl SpeechParams {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn statics(&self) -> Vec<Vec<f64>> {
        self.frames.iter().map(FrameParams::to_vec).collect()
    }

    /// 84-dimensional training targets: statics, deltas, delta-deltas.
    pub fn targets(&self) -> Vec<Vec<f64>> {
        let s = self.statics();
        if s.is_empty() {
            return s;
        }
        let d1 = deltas(&s);
        let d2 = deltas(&d1);
        s.into_iter()
            .zip(d1)
            .zip(d2)
            .map(|((mut a, b), c)| {
                a.extend(b);
                a.extend(c);
                a
            })
            .collect()
    }
}

/// Plain autocorrelation LPC of a raw frame under a Hamming window.
/// Returns the predictor and the residual power.
pub fn lpc_analysis(frame: &[f64], order: usize) -> (Vec<f64>, f64) {
    let r = autocorrelation(frame, &hamming(frame.len()), order);
    levinson(&r, order)
}

/// Fits the glottal pole pair as the order-2 predictor of the frame,
/// returning (angle, radius).
fn fit_glottal(frame: &[f64]) -> (f64, f64) {
    let (a, _) = lpc_analysis(frame, 2);
    let radius = a[2]
        .max(MIN_GLOTTAL_RADIUS * MIN_GLOTTAL_RADIUS)
        .sqrt()
        .min(MAX_GLOTTAL_RADIUS);
    let cos = (-a[1] / (2.0 * radius)).clamp(-1.0, 1.0);
    (cos.acos(), radius)
}

/// Windowed-sinc low-pass taps with cutoff `fc` in cycles per sample.
fn lowpass_taps(fc: f64, half: usize) -> Vec<f64> {
    let taps: Vec<f64> = (0..=2 * half)
        .map(|i| {
            let t = i as f64 - half as f64;
            let sinc = if t == 0.0 {
                2.0 * fc
            } else {
                (2.0 * PI * fc * t).sin() / (PI * t)
            };
            sinc * (0.54 + 0.46 * (PI * t / half as f64).cos())
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|v| v / sum).collect()
}

/// Normalized correlation of the low-band residual at the pitch period.
/// The whitened residual is a train of near-impulses, so its raw
/// correlation collapses under sub-sample period jitter; below 2 kHz the
/// harmonic comb survives it.
fn periodicity(residual: &[f64], period: f64, sample_rate: f64) -> f64 {
    const HALF: usize = 16;
    let taps = lowpass_taps(2000.0 / sample_rate, HALF);
    if residual.len() <= 2 * HALF {
        return 0.0;
    }
    let residual: Vec<f64> = (0..residual.len() - 2 * HALF)
        .map(|n| taps.iter().enumerate().map(|(k, c)| c * residual[n + k]).sum())
        .collect();
    let center = period.round() as usize;
    let mut best: f64 = 0.0;
    for lag in center.saturating_sub(2).max(1)..=center + 2 {
        if lag + 8 > residual.len() {
            continue;
        }
        let (a, b) = (&residual[..residual.len() - lag], &residual[lag..]);
        let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let aa: f64 = a.iter().map(|x| x * x).sum();
        let bb: f64 = b.iter().map(|x| x * x).sum();
        if aa > 0.0 && bb > 0.0 {
            best = best.max(ab / (aa * bb).sqrt());
        }
    }
    best
}

fn sample_at(x: &[f64], i: isize) -> f64 {
    if i < 0 || i as usize >= x.len() {
        0.0
    } else {
        x[i as usize]
    }
}

fn analyze_frame(samples: &[f64], grid: &FrameGrid, i: usize, f0_hz: f64) -> FrameParams {
    let win = grid.window_len();
    let start = (i * grid.hop_len()) as isize;
    let raw: Vec<f64> = (0..win as isize).map(|n| sample_at(samples, start + n)).collect();
    if raw.iter().all(|&v| v == 0.0) {
        return FrameParams::silent();
    }
    let (angle, radius) = fit_glottal(&raw);
    let g = glottal_poly(angle, radius);
    let filtered = |from: isize, len: usize| -> Vec<f64> {
        (0..len as isize)
            .map(|n| {
                let t = from + n;
                g[0] * sample_at(samples, t) + g[1] * sample_at(samples, t - 1) + g[2] * sample_at(samples, t - 2)
            })
            .collect()
    };
    let tract_input = filtered(start, win);
    let (a, err) = lpc_analysis(&tract_input, LPC_ORDER);
    let lsp = {
        let mut l = lpc_to_lsp(&a);
        stabilize_lsp(&mut l);
        l
    };

    // the periodicity window spans at least 2.5 pitch periods
    let period = grid.sample_rate as f64 / f0_hz.max(1.0);
    let span = (win as f64).max(2.5 * period).ceil() as usize + 32;
    let center = start + win as isize / 2;
    let wide_start = center - span as isize / 2 - LPC_ORDER as isize;
    let wide = filtered(wide_start, span + LPC_ORDER);
    let residual: Vec<f64> = (LPC_ORDER..wide.len())
        .map(|n| a.iter().enumerate().map(|(k, c)| c * wide[n - k]).sum())
        .collect();
    let r = periodicity(&residual, period, grid.sample_rate as f64).clamp(PERIODICITY_CLAMP, 1.0 - PERIODICITY_CLAMP);

    FrameParams {
        lsp,
        gain: err.max(POWER_FLOOR).ln(),
        hnr: (r / (1.0 - r)).ln(),
        glottal_angle: angle,
        glottal_log_mag: radius.ln(),
    }
}

/// Per-frame analysis on `grid`; `f0` must have one value per frame.
pub fn extract_speech_params(clip: &AudioClip, grid: &FrameGrid, f0: &F0Track) -> Result<SpeechParams> {
    let n = grid.n_frames(clip.len());
    if f0.len() != n {
        return Err(Error::dimension(n, f0.len()));
    }
    let hz = f0.hz();
    let frames = (0..n)
        .into_par_iter()
        .map(|i| analyze_frame(&clip.samples, grid, i, hz[i]))
        .collect();
    Ok(SpeechParams { frames })
}
