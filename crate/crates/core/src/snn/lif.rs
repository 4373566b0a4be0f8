use super::SnnParams;
use crate::error::{Error, Result};

const DT_MS: f64 = 1.0;

/// Spike times in milliseconds, one ordered list per neuron.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpikeTrain {
    pub spikes: Vec<Vec<f64>>,
}

impl SpikeTrain {
    pub fn total(&self) -> usize {
        self.spikes.iter().map(Vec::len).sum()
    }
}

struct Population {
    v: Vec<f64>,
    refractory_left: Vec<usize>,
    thresholds: Vec<f64>,
    decay: f64,
    spikes: Vec<Vec<f64>>,
}

impl Population {
    fn new(n: usize, tau_ms: f64, params: &SnnParams) -> Self {
        Self {
            v: vec![params.lif.rest; n],
            refractory_left: vec![0; n],
            thresholds: (0..n).map(|i| params.lif.threshold_of(i, n)).collect(),
            decay: (-DT_MS / tau_ms).exp(),
            spikes: vec![Vec::new(); n],
        }
    }

    /// Advances every neuron by one step under a shared input current and
    /// returns the number of spikes emitted.
    fn step(&mut self, input: f64, t_ms: f64, params: &SnnParams, refractory_steps: usize) -> usize {
        let target = params.lif.rest + input;
        let mut fired = 0;
        for i in 0..self.v.len() {
            if self.refractory_left[i] > 0 {
                self.refractory_left[i] -= 1;
                continue;
            }
            // exponential Euler: exact for input held constant over the step
            self.v[i] = target + (self.v[i] - target) * self.decay;
            if self.v[i] >= self.thresholds[i] {
                self.spikes[i].push(t_ms);
                self.v[i] = params.lif.reset;
                self.refractory_left[i] = refractory_steps;
                fired += 1;
            }
        }
        fired
    }
}

/// Simulates the excitatory/inhibitory network on a drive sampled every
/// millisecond. Excitatory cells receive the drive minus inhibitory
/// feedback; inhibitory cells receive excitatory input only.
pub fn run_lif_network(drive: &[f64], params: &SnnParams) -> Result<(SpikeTrain, SpikeTrain)> {
    if let Some(i) = drive.iter().position(|d| !d.is_finite()) {
        return Err(Error::InvalidDrive(i));
    }
    let lif = &params.lif;
    let coupling = &params.coupling;
    let refractory_steps = (lif.refractory_ms / DT_MS).round().max(0.0) as usize;
    let mut exc = Population::new(lif.n_exc, lif.tau_exc_ms, params);
    let mut inh = Population::new(lif.n_inh, lif.tau_inh_ms, params);
    let syn_exc_decay = (-DT_MS / coupling.tau_syn_exc_ms).exp();
    let syn_inh_decay = (-DT_MS / coupling.tau_syn_inh_ms).exp();
    let (mut trace_exc, mut trace_inh) = (0.0, 0.0);

    for (k, &d) in drive.iter().enumerate() {
        let t = k as f64 * DT_MS;
        let exc_input = d - coupling.inh_to_exc * trace_inh / lif.n_inh as f64;
        let inh_input = coupling.exc_to_inh * trace_exc / lif.n_exc as f64;
        let fired_exc = exc.step(exc_input, t, params, refractory_steps);
        let fired_inh = inh.step(inh_input, t, params, refractory_steps);
        trace_exc = trace_exc * syn_exc_decay + fired_exc as f64;
        trace_inh = trace_inh * syn_inh_decay + fired_inh as f64;
    }
    Ok((SpikeTrain { spikes: exc.spikes }, SpikeTrain { spikes: inh.spikes }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snn::{detect_boundaries, CouplingParams};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn uncoupled() -> SnnParams {
        let mut p = SnnParams::default();
        p.coupling = CouplingParams {
            exc_to_inh: 0.0,
            inh_to_exc: 0.0,
            ..CouplingParams::default()
        };
        p.lif.threshold_spread = 0.0;
        p
    }

    #[test]
    fn zero_drive_is_silent() {
        let (exc, inh) = run_lif_network(&[0.0; 500], &uncoupled()).unwrap();
        assert_eq!(exc.total() + inh.total(), 0);
        let (exc, inh) = run_lif_network(&[0.0; 500], &SnnParams::default()).unwrap();
        assert_eq!(exc.total() + inh.total(), 0);
    }

    #[test]
    fn constant_drive_matches_closed_form_period() {
        let p = uncoupled();
        for drive in [1.2, 2.0, 5.0] {
            let (exc, _) = run_lif_network(&vec![drive; 1000], &p).unwrap();
            let times = &exc.spikes[0];
            assert!(times.len() > 5);
            // time from reset to threshold under constant input
            let charge = p.lif.tau_exc_ms * (drive / (drive - p.lif.threshold)).ln();
            let period = p.lif.refractory_ms + charge;
            for w in times.windows(2) {
                assert!((w[1] - w[0] - period).abs() <= 1.0, "isi {} vs {period}", w[1] - w[0]);
            }
        }
    }

    #[test]
    fn non_finite_drive_is_rejected() {
        assert!(matches!(
            run_lif_network(&[0.0, f64::NAN], &SnnParams::default()),
            Err(Error::InvalidDrive(1))
        ));
    }

    #[test]
    fn modulated_drive_bursts_at_modulation_rate() {
        let rate_hz = 4.0;
        let drive: Vec<f64> = (0..3000)
            .map(|t| 0.5 + 1.5 * (0.5 - 0.5 * (2.0 * PI * rate_hz * t as f64 / 1000.0).cos()))
            .collect();
        let p = SnnParams::default();
        let (_, inh) = run_lif_network(&drive, &p).unwrap();
        let b = detect_boundaries(&inh, &p.burst);
        assert_eq!(b.len(), 12, "{:?}", b.times_ms);
    }

    fn spacing_ok(train: &SpikeTrain, refractory: f64) -> bool {
        train
            .spikes
            .iter()
            .all(|s| s.windows(2).all(|w| w[1] - w[0] >= refractory))
    }

    proptest! {
        #[test]
        fn refractory_spacing_holds(level in 0.0f64..6.0, depth in 0.0f64..4.0, w_ei in 0.0f64..20.0, w_ie in 0.0f64..20.0) {
            let drive: Vec<f64> = (0..800).map(|t| level + depth * (t as f64 / 37.0).sin()).collect();
            let mut p = SnnParams::default();
            p.coupling.exc_to_inh = w_ei;
            p.coupling.inh_to_exc = w_ie;
            let (exc, inh) = run_lif_network(&drive, &p).unwrap();
            prop_assert!(spacing_ok(&exc, p.lif.refractory_ms));
            prop_assert!(spacing_ok(&inh, p.lif.refractory_ms));
            let b = detect_boundaries(&inh, &p.burst);
            prop_assert!(b.times_ms.windows(2).all(|w| w[1] > w[0]));
            prop_assert!(b.times_ms.iter().all(|&t| t >= 0.0));
        }

        #[test]
        fn scaling_drive_and_thresholds_preserves_spikes(exp in -3i32..4, level in 0.5f64..4.0) {
            let c = 2f64.powi(exp);
            let drive: Vec<f64> = (0..600).map(|t| level * (1.0 + (t as f64 / 23.0).sin())).collect();
            let base = SnnParams::default();
            let mut scaled = base.clone();
            scaled.lif.threshold *= c;
            scaled.lif.reset *= c;
            // coupling weights are currents, so they scale with the drive
            scaled.coupling.exc_to_inh *= c;
            scaled.coupling.inh_to_exc *= c;
            let scaled_drive: Vec<f64> = drive.iter().map(|d| d * c).collect();
            prop_assert_eq!(run_lif_network(&drive, &base).unwrap(), run_lif_network(&scaled_drive, &scaled).unwrap());
        }
    }
}
