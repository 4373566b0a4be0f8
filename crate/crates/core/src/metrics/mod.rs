//! Objective quality and complexity measures.

mod stoi;

pub use stoi::{stoi, STOI_RATE};

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::bitstream::BitRateReport;
use crate::error::{Error, Result};
use crate::frontend::{frame_signal, FrameGrid, MelFilterbank};
use crate::prosody::{SyllableCode, DURATION_STEP_MS};

/// Cepstral coefficients compared by [`mcd`] (c1..c13).
pub const MCD_COEFFS: usize = 13;
/// Frame shift of the distortion measurement.
pub const MCD_SHIFT_MS: u32 = 10;

/// Weights plus biases of a fully connected network with layer sizes `dims`.
pub fn count_parameters(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Mel cepstra c1..c13 per frame, scaled as Fourier-series coefficients of
/// the mel-warped log amplitude spectrum, L(w) = c0 + 2 sum c_k cos(k w).
/// At this scale the distance below approximates the RMS log-spectral
/// difference in dB.
pub fn mel_cepstra(clip: &AudioClip) -> Result<Vec<Vec<f64>>> {
    let grid = FrameGrid::new(MCD_SHIFT_MS)?;
    let bank = MelFilterbank::new(clip.sample_rate);
    Ok(frame_signal(clip, &grid)
        .iter()
        .map(|f| {
            let log_power = bank.log_energies(f);
            let n = log_power.len() as f64;
            (1..=MCD_COEFFS)
                .map(|k| {
                    log_power
                        .iter()
                        .enumerate()
                        .map(|(m, p)| 0.5 * p * (PI * k as f64 * (m as f64 + 0.5) / n).cos())
                        .sum::<f64>()
                        / n
                })
                .collect()
        })
        .collect())
}

/// Distortion between two aligned cepstral sequences, trimmed to the
/// shorter one.
pub fn mcd_cepstra(reference: &[Vec<f64>], test: &[Vec<f64>]) -> Result<f64> {
    let n = reference.len().min(test.len());
    if n == 0 {
        return Err(Error::TooShort("distortion needs at least one frame per clip".into()));
    }
    let k = 10.0 / std::f64::consts::LN_10 * 2f64.sqrt();
    let sum: f64 = reference[..n]
        .iter()
        .zip(&test[..n])
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
        .sum();
    Ok(k * sum / n as f64)
}

/// Frame-aligned mel cepstral distortion in dB.
pub fn mcd(reference: &AudioClip, test: &AudioClip) -> Result<f64> {
    if reference.sample_rate != test.sample_rate {
        return Err(Error::config("distortion needs equal sample rates"));
    }
    mcd_cepstra(&mel_cepstra(reference)?, &mel_cepstra(test)?)
}

/// Mean syllable duration in ms, the algorithmic latency proxy.
pub fn latency_report(codes: &[SyllableCode]) -> Result<f64> {
    if codes.is_empty() {
        return Err(Error::NoSyllables);
    }
    let steps: f64 = codes.iter().map(|c| c.dur_steps as f64).sum();
    Ok(steps * DURATION_STEP_MS / codes.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub mcd_db: Option<f64>,
    pub stoi: Option<f64>,
    pub bitrate: Option<BitRateReport>,
    /// Mean syllable duration, the algorithmic latency proxy.
    pub mean_syllable_ms: Option<f64>,
}

impl QualityReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl fmt::Display for QualityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(d) = self.mcd_db {
            writeln!(f, "{:<20} {:>10.3}", "MCD (dB)", d)?;
        }
        if let Some(s) = self.stoi {
            writeln!(f, "{:<20} {:>10.3}", "STOI", s)?;
        }
        if let Some(l) = self.mean_syllable_ms {
            writeln!(f, "{:<20} {:>10.1}", "latency (ms)", l)?;
        }
        if let Some(b) = &self.bitrate {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}
