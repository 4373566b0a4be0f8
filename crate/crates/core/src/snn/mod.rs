//! Spiking syllable boundary detector.
//!
//! Cepstra are projected onto one channel, convolved with a
//! difference-of-Gaussians kernel and sign-flipped so that energy dips
//! become drive peaks. The drive feeds a small excitatory/inhibitory
//! leaky integrate-and-fire network; every inhibitory burst marks a
//! putative syllable boundary.

mod lif;
mod train;

pub use lif::{run_lif_network, SpikeTrain};
pub use train::{boundary_f_score, corpus_cost, train_snn, LabeledUtterance, SnnTrainReport};

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::{N_CEPS, WINDOW_MS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelParams {
    pub length_ms: f64,
    pub sigma_center_ms: f64,
    pub sigma_surround_ms: f64,
    pub surround_weight: f64,
    /// Shifts the kernel peak; positive values delay the response.
    pub lead_ms: f64,
    pub gain: f64,
    pub bias: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            length_ms: 320.0,
            sigma_center_ms: 20.0,
            sigma_surround_ms: 70.0,
            surround_weight: 1.0,
            lead_ms: 0.0,
            gain: 1.5,
            bias: 0.3,
        }
    }
}

impl KernelParams {
    /// Kernel taps at the frame rate; odd length, centred.
    pub fn sample(&self, shift_ms: f64) -> Vec<f64> {
        let half = (self.length_ms / shift_ms / 2.0).round() as usize;
        let gauss = |sigma: f64| -> Vec<f64> {
            let sigma = sigma.max(1e-3);
            let g: Vec<f64> = (0..=2 * half)
                .map(|j| {
                    let t = (j as f64 - half as f64) * shift_ms - self.lead_ms;
                    (-0.5 * (t / sigma).powi(2)).exp()
                })
                .collect();
            let sum: f64 = g.iter().sum();
            if sum > 0.0 {
                g.iter().map(|v| v / sum).collect()
            } else {
                g
            }
        };
        let center = gauss(self.sigma_center_ms);
        let surround = gauss(self.sigma_surround_ms);
        center
            .iter()
            .zip(&surround)
            .map(|(c, s)| c - self.surround_weight * s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LifParams {
    pub n_exc: usize,
    pub n_inh: usize,
    pub tau_exc_ms: f64,
    pub tau_inh_ms: f64,
    pub threshold: f64,
    pub reset: f64,
    pub rest: f64,
    pub refractory_ms: f64,
    /// Relative spread of thresholds across each population.
    pub threshold_spread: f64,
}

impl Default for LifParams {
    fn default() -> Self {
        Self {
            n_exc: 10,
            n_inh: 10,
            tau_exc_ms: 20.0,
            tau_inh_ms: 10.0,
            threshold: 1.0,
            reset: 0.0,
            rest: 0.0,
            refractory_ms: 5.0,
            threshold_spread: 0.2,
        }
    }
}

impl LifParams {
    pub fn threshold_of(&self, i: usize, n: usize) -> f64 {
        if n < 2 {
            return self.threshold;
        }
        let offset = i as f64 / (n - 1) as f64 - 0.5;
        self.threshold * (1.0 + self.threshold_spread * offset)
    }
}

/// All-to-all coupling through exponentially decaying synaptic traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CouplingParams {
    pub exc_to_inh: f64,
    pub inh_to_exc: f64,
    pub tau_syn_exc_ms: f64,
    pub tau_syn_inh_ms: f64,
}

impl Default for CouplingParams {
    fn default() -> Self {
        Self {
            exc_to_inh: 8.0,
            inh_to_exc: 6.0,
            tau_syn_exc_ms: 5.0,
            tau_syn_inh_ms: 40.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BurstParams {
    pub min_spikes: usize,
    pub window_ms: f64,
    pub min_separation_ms: f64,
}

impl Default for BurstParams {
    fn default() -> Self {
        Self {
            min_spikes: 3,
            window_ms: 20.0,
            min_separation_ms: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SnnParams {
    pub channel_weights: Vec<f64>,
    pub kernel: KernelParams,
    pub lif: LifParams,
    pub coupling: CouplingParams,
    pub burst: BurstParams,
}

impl Default for SnnParams {
    fn default() -> Self {
        let mut channel_weights = vec![0.0; N_CEPS];
        channel_weights[0] = 1.0;
        Self {
            channel_weights,
            kernel: KernelParams::default(),
            lif: LifParams::default(),
            coupling: CouplingParams::default(),
            burst: BurstParams::default(),
        }
    }
}

impl SnnParams {
    pub fn validate(&self) -> Result<()> {
        if self.channel_weights.len() != N_CEPS {
            return Err(Error::dimension(N_CEPS, self.channel_weights.len()));
        }
        let positive = [
            self.lif.tau_exc_ms,
            self.lif.tau_inh_ms,
            self.coupling.tau_syn_exc_ms,
            self.coupling.tau_syn_inh_ms,
            self.burst.window_ms,
            self.kernel.length_ms,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::config("SNN time constants and windows must be positive"));
        }
        if self.lif.n_exc == 0 || self.lif.n_inh == 0 {
            return Err(Error::config("SNN populations must be non-empty"));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|_| Error::config_path("cannot read SNN parameters", path))?;
        let params: SnnParams = serde_json::from_str(&text)?;
        params.validate()?;
        Ok(params)
    }
}

/// Ordered syllable boundary times in milliseconds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundarySet {
    pub times_ms: Vec<f64>,
}

impl BoundarySet {
    pub fn new(times_ms: Vec<f64>) -> Result<Self> {
        if times_ms.iter().any(|t| !t.is_finite()) || times_ms.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("boundary times must be finite and strictly increasing"));
        }
        Ok(Self { times_ms })
    }

    pub fn len(&self) -> usize {
        self.times_ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_ms.is_empty()
    }
}

pub fn weight_and_reduce(cepstra: &[Vec<f64>], weights: &[f64]) -> Result<Vec<f64>> {
    cepstra
        .iter()
        .map(|c| {
            if c.len() != weights.len() {
                return Err(Error::dimension(weights.len(), c.len()));
            }
            Ok(c.iter().zip(weights).map(|(a, b)| a * b).sum())
        })
        .collect()
}

/// Same-length convolution with zero padding; the kernel centre is tap
/// `kernel.len() / 2`.
pub fn convolve_drive(series: &[f64], kernel: &[f64]) -> Vec<f64> {
    let n = series.len() as isize;
    let c = (kernel.len() / 2) as isize;
    (0..n)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .filter_map(|(j, k)| {
                    let src = i + c - j as isize;
                    (0..n).contains(&src).then(|| k * series[src as usize])
                })
                .sum()
        })
        .collect()
}

/// Frame-rate drive: weighted cepstra, standardized per utterance,
/// band-passed and sign-flipped.
pub fn frame_drive(cepstra: &[Vec<f64>], shift_ms: f64, params: &SnnParams) -> Result<Vec<f64>> {
    let series = weight_and_reduce(cepstra, &params.channel_weights)?;
    if series.is_empty() {
        return Ok(series);
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let std = (series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n)
        .sqrt()
        .max(1e-9);
    let z: Vec<f64> = series.iter().map(|v| (v - mean) / std).collect();
    let conv = convolve_drive(&z, &params.kernel.sample(shift_ms));
    Ok(conv
        .iter()
        .map(|v| -params.kernel.gain * v + params.kernel.bias)
        .collect())
}

/// Linear interpolation of a frame-rate signal onto a 1 ms grid covering
/// the analysed span; values are held beyond the first and last centre.
pub fn upsample_to_ms(frame_values: &[f64], shift_ms: f64) -> Vec<f64> {
    let n = frame_values.len();
    if n == 0 {
        return Vec::new();
    }
    let half_window = WINDOW_MS as f64 / 2.0;
    let span_ms = (n - 1) as f64 * shift_ms + WINDOW_MS as f64;
    (0..span_ms.floor() as usize)
        .map(|t| {
            let pos = (t as f64 - half_window) / shift_ms;
            if pos <= 0.0 {
                frame_values[0]
            } else if pos >= (n - 1) as f64 {
                frame_values[n - 1]
            } else {
                let i = pos.floor() as usize;
                let frac = pos - i as f64;
                frame_values[i] * (1.0 - frac) + frame_values[i + 1] * frac
            }
        })
        .collect()
}

/// Inhibitory bursts to boundary times (median spike time of each burst).
pub fn detect_boundaries(inh: &SpikeTrain, burst: &BurstParams) -> BoundarySet {
    let mut spikes: Vec<(f64, usize)> = inh
        .spikes
        .iter()
        .enumerate()
        .flat_map(|(neuron, times)| times.iter().map(move |&t| (t, neuron)))
        .collect();
    spikes.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut times: Vec<f64> = Vec::new();
    let mut i = 0;
    while i < spikes.len() {
        let end = spikes[i..]
            .iter()
            .position(|s| s.0 - spikes[i].0 > burst.window_ms)
            .map_or(spikes.len(), |p| i + p);
        let mut neurons: Vec<usize> = spikes[i..end].iter().map(|s| s.1).collect();
        neurons.sort_unstable();
        neurons.dedup();
        if neurons.len() >= burst.min_spikes.max(1) {
            let cluster: Vec<f64> = spikes[i..end].iter().map(|s| s.0).collect();
            let m = cluster.len();
            let median = if m % 2 == 1 {
                cluster[m / 2]
            } else {
                0.5 * (cluster[m / 2 - 1] + cluster[m / 2])
            };
            if times
                .last()
                .is_none_or(|&last| median - last >= burst.min_separation_ms)
            {
                times.push(median);
            }
            i = end;
        } else {
            i += 1;
        }
    }
    BoundarySet { times_ms: times }
}

/// Full detector: cepstra at `shift_ms` to boundary times.
pub fn detect_syllables(cepstra: &[Vec<f64>], shift_ms: f64, params: &SnnParams) -> Result<BoundarySet> {
    let drive = upsample_to_ms(&frame_drive(cepstra, shift_ms, params)?, shift_ms);
    let (_, inh) = run_lif_network(&drive, params)?;
    Ok(detect_boundaries(&inh, &params.burst))
}

/// Greedy one-to-one matching of boundaries within `tolerance_ms`, closest
/// pairs first.
pub fn match_boundaries(detected: &BoundarySet, reference: &BoundarySet, tolerance_ms: f64) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, d) in detected.times_ms.iter().enumerate() {
        for (j, r) in reference.times_ms.iter().enumerate() {
            let delta = (d - r).abs();
            if delta <= tolerance_ms {
                pairs.push((delta, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_d = vec![false; detected.len()];
    let mut used_r = vec![false; reference.len()];
    let mut matched = Vec::new();
    for (_, i, j) in pairs {
        if !used_d[i] && !used_r[j] {
            used_d[i] = true;
            used_r[j] = true;
            matched.push((i, j));
        }
    }
    matched
}

pub const MATCH_TOLERANCE_MS: f64 = 80.0;
pub const MISS_PENALTY_MS: f64 = 100.0;

/// Sum of matched offsets plus a fixed penalty per unmatched boundary.
pub fn syllabic_distance(detected: &BoundarySet, reference: &BoundarySet) -> f64 {
    let matched = match_boundaries(detected, reference, MATCH_TOLERANCE_MS);
    let offsets: f64 = matched
        .iter()
        .map(|&(i, j)| (detected.times_ms[i] - reference.times_ms[j]).abs())
        .sum();
    let unmatched = detected.len() + reference.len() - 2 * matched.len();
    offsets + MISS_PENALTY_MS * unmatched as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(t: &[f64]) -> BoundarySet {
        BoundarySet::new(t.to_vec()).unwrap()
    }

    #[test]
    fn one_hot_weights_project() {
        let cepstra: Vec<Vec<f64>> = (0..5).map(|i| (0..13).map(|k| (i * 13 + k) as f64).collect()).collect();
        let w = SnnParams::default().channel_weights;
        assert_eq!(
            weight_and_reduce(&cepstra, &w).unwrap(),
            vec![0.0, 13.0, 26.0, 39.0, 52.0]
        );
        assert!(weight_and_reduce(&cepstra, &[0.0; 13])
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
        assert!(matches!(
            weight_and_reduce(&cepstra, &[1.0; 12]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn convolution_examples() {
        let x = [1.0, -2.0, 3.5];
        assert_eq!(convolve_drive(&x, &[1.0]), x.to_vec());
        let flat = convolve_drive(&[2.0; 6], &[0.5, 0.5]);
        assert!(flat[1..5].iter().all(|&v| v == 2.0));
        let mut impulse = vec![0.0; 9];
        impulse[4] = 1.0;
        let k = [0.1, 0.7, -0.3];
        assert_eq!(&convolve_drive(&impulse, &k)[3..6], &k);
    }

    #[test]
    fn kernel_is_band_pass() {
        let k = KernelParams::default().sample(16.0);
        assert_eq!(k.len() % 2, 1);
        assert!(k.iter().sum::<f64>().abs() < 1e-12);
        assert!(k[k.len() / 2] > 0.0);
    }

    #[test]
    fn upsampling_hits_frame_centres() {
        let v = upsample_to_ms(&[0.0, 16.0, 32.0], 16.0);
        assert_eq!(v.len(), 57);
        assert_eq!(v[12], 0.0);
        assert!((v[20] - 7.5).abs() < 1e-12);
        assert_eq!(v[56], 32.0);
    }

    #[test]
    fn burst_detection() {
        let empty = SpikeTrain {
            spikes: vec![vec![]; 10],
        };
        assert!(detect_boundaries(&empty, &BurstParams::default()).is_empty());

        let mut spikes = vec![vec![]; 10];
        for (n, t) in [298.0, 299.0, 300.0, 301.0, 303.0].iter().enumerate() {
            spikes[n].push(*t);
        }
        let b = detect_boundaries(&SpikeTrain { spikes: spikes.clone() }, &BurstParams::default());
        assert_eq!(b.times_ms, vec![300.0]);

        for n in 0..4 {
            spikes[n].push(500.0 + n as f64);
        }
        let b = detect_boundaries(&SpikeTrain { spikes: spikes.clone() }, &BurstParams::default());
        assert_eq!(b.times_ms, vec![300.0, 501.5]);

        // isolated spikes from two neurons do not form a burst
        let sparse = SpikeTrain {
            spikes: vec![vec![100.0], vec![105.0], vec![], vec![]],
        };
        assert!(detect_boundaries(&sparse, &BurstParams::default()).is_empty());
    }

    #[test]
    fn syllabic_distance_examples() {
        let r = set(&[100.0, 300.0, 500.0]);
        assert_eq!(syllabic_distance(&r, &r), 0.0);
        assert_eq!(syllabic_distance(&set(&[110.0, 310.0, 510.0]), &r), 30.0);
        assert_eq!(syllabic_distance(&set(&[]), &set(&[100.0, 400.0])), 200.0);
        assert_eq!(syllabic_distance(&set(&[100.0, 200.0]), &set(&[100.0])), 100.0);
    }

    #[test]
    fn boundary_set_rejects_unordered() {
        assert!(BoundarySet::new(vec![1.0, 1.0]).is_err());
        assert!(BoundarySet::new(vec![2.0, 1.0]).is_err());
    }

    #[test]
    fn params_json_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snn.json");
        let mut p = SnnParams::default();
        p.channel_weights[3] = -0.25;
        p.save(&path).unwrap();
        assert_eq!(SnnParams::load(&path).unwrap(), p);
    }
}
