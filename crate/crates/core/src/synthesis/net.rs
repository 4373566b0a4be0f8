//! Posterior-to-parameter regression network.

use std::path::Path;

use ndarray::Array2;

use super::analysis::{FrameParams, SpeechParams, N_PARAMS};
use crate::error::{Error, Result};
use crate::neural::io::{read_networks, write_networks};
use crate::neural::{train_mlp, Dataset, MlpWeights, OutputKind, TrainConfig, TrainingLog};

/// Frames of posterior context fed to the network (centre +-5).
pub const SYNTH_CONTEXT: usize = 11;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisNet {
    pub weights: MlpWeights,
    pub k: usize,
}

impl SynthesisNet {
    pub fn new(weights: MlpWeights, k: usize) -> Result<Self> {
        weights.validate()?;
        if weights.input_dim() != k * SYNTH_CONTEXT {
            return Err(Error::dimension(k * SYNTH_CONTEXT, weights.input_dim()));
        }
        if weights.output_dim() != N_PARAMS {
            return Err(Error::dimension(N_PARAMS, weights.output_dim()));
        }
        if weights.output_kind != OutputKind::Linear {
            return Err(Error::config("synthesis network needs a linear output layer"));
        }
        Ok(Self { weights, k })
    }

    pub fn input_dim(&self) -> usize {
        self.k * SYNTH_CONTEXT
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_networks(path, std::slice::from_ref(&self.weights))
    }

    pub fn load(path: impl AsRef<Path>, k: usize) -> Result<Self> {
        let path = path.as_ref();
        let mut nets = read_networks(path)?;
        if nets.len() != 1 {
            return Err(Error::config_path(
                format!("expected one synthesis network, found {}", nets.len()),
                path,
            ));
        }
        Self::new(nets.remove(0), k)
    }
}

/// Forward pass over stacked posteriors; only the 28 statics are kept and
/// the LSPs are stabilized.
pub fn synth_forward(net: &SynthesisNet, stacked: &[Vec<f64>]) -> Result<SpeechParams> {
    if stacked.is_empty() {
        return Ok(SpeechParams::default());
    }
    let dim = net.input_dim();
    if let Some(bad) = stacked.iter().find(|r| r.len() != dim) {
        return Err(Error::dimension(dim, bad.len()));
    }
    let x = Array2::from_shape_fn((stacked.len(), dim), |(i, j)| stacked[i][j]);
    let out = net.weights.forward_batch(x.view())?;
    let frames = out
        .rows()
        .into_iter()
        .map(|row| FrameParams::from_slice(row.as_slice().expect("standard layout")))
        .collect::<Result<Vec<_>>>()?;
    Ok(SpeechParams { frames })
}

/// Trains the network on (stacked posteriors, analysed parameters) pairs,
/// one entry per utterance.
pub fn train_synthesis(
    inputs: &[Vec<Vec<f64>>],
    targets: &[SpeechParams],
    k: usize,
    cfg: &TrainConfig,
) -> Result<(SynthesisNet, TrainingLog)> {
    if inputs.len() != targets.len() {
        return Err(Error::dimension(targets.len(), inputs.len()));
    }
    let mut pairs = Vec::new();
    for (x, t) in inputs.iter().zip(targets) {
        if x.len() != t.len() {
            return Err(Error::dimension(t.len(), x.len()));
        }
        pairs.extend(x.iter().cloned().zip(t.targets()));
    }
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let data = Dataset::from_pairs(&pairs)?;
    let (weights, log) = train_mlp(&data, OutputKind::Linear, cfg)?;
    Ok((SynthesisNet::new(weights, k)?, log))
}
