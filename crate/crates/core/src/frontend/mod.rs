//! Framing, cepstral features and continuous pitch extraction.

mod mfcc;
mod pitch;

pub use mfcc::{compute_mfcc, deltas, stack_context, AcousticFeatures, MelFilterbank, N_CEPS, N_MFCC};
pub use pitch::{extract_continuous_f0, F0Track, PitchConfig, F0_MAX_HZ, F0_MIN_HZ};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::error::{Error, Result};

pub const WINDOW_MS: u32 = 25;

/// Analysis frame layout: 25 ms windows advanced by `shift_ms`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameGrid {
    pub window_ms: u32,
    pub shift_ms: u32,
    pub sample_rate: u32,
}

impl FrameGrid {
    pub fn new(shift_ms: u32) -> Result<Self> {
        if ![10, 16, 20].contains(&shift_ms) {
            return Err(Error::config(format!(
                "frame shift must be 10, 16 or 20 ms, got {shift_ms}"
            )));
        }
        Ok(Self {
            window_ms: WINDOW_MS,
            shift_ms,
            sample_rate: crate::audio::SAMPLE_RATE,
        })
    }

    pub fn window_len(&self) -> usize {
        (self.window_ms * self.sample_rate / 1000) as usize
    }

    pub fn hop_len(&self) -> usize {
        (self.shift_ms * self.sample_rate / 1000) as usize
    }

    pub fn n_frames(&self, n_samples: usize) -> usize {
        let win = self.window_len();
        if n_samples < win {
            0
        } else {
            (n_samples - win) / self.hop_len() + 1
        }
    }

    /// Centre of frame `i` in milliseconds.
    pub fn frame_center_ms(&self, i: usize) -> f64 {
        (i as f64) * self.shift_ms as f64 + self.window_ms as f64 / 2.0
    }

    /// Number of output samples covered by `n_frames` overlapping windows.
    pub fn span_samples(&self, n_frames: usize) -> usize {
        if n_frames == 0 {
            0
        } else {
            (n_frames - 1) * self.hop_len() + self.window_len()
        }
    }
}

pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Splits the clip into Hamming-windowed frames on `grid`.
pub fn frame_signal(clip: &AudioClip, grid: &FrameGrid) -> Vec<Vec<f64>> {
    let win = grid.window_len();
    let hop = grid.hop_len();
    let window = hamming(win);
    (0..grid.n_frames(clip.len()))
        .map(|i| {
            clip.samples[i * hop..i * hop + win]
                .iter()
                .zip(&window)
                .map(|(s, w)| s * w)
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn clip_ms(ms: usize) -> AudioClip {
        AudioClip::new(vec![0.1; ms * 16], 16_000).unwrap()
    }

    #[test]
    fn one_second_at_16ms_gives_61_frames() {
        let grid = FrameGrid::new(16).unwrap();
        assert_eq!(frame_signal(&clip_ms(1000), &grid).len(), 61);
    }

    #[test]
    fn exact_window_gives_one_frame_and_shorter_gives_none() {
        for shift in [10, 16, 20] {
            let grid = FrameGrid::new(shift).unwrap();
            let frames = frame_signal(&clip_ms(25), &grid);
            assert_eq!(frames.len(), 1);
            assert_eq!(frames[0].len(), 400);
            assert!(frame_signal(&clip_ms(24), &grid).is_empty());
        }
    }

    #[test]
    fn rejects_unsupported_shift() {
        assert!(FrameGrid::new(15).is_err());
    }

    proptest! {
        #[test]
        fn frame_count_formula(len_ms in 0usize..3000, shift_idx in 0usize..3) {
            let shift = [10u32, 16, 20][shift_idx];
            let grid = FrameGrid::new(shift).unwrap();
            let n = frame_signal(&clip_ms(len_ms), &grid).len();
            let expected = if len_ms < 25 { 0 } else { (len_ms - 25) / shift as usize + 1 };
            prop_assert_eq!(n, expected);
        }
    }
}
