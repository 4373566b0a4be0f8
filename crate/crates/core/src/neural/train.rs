use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{MlpWeights, Normalization, OutputKind};
use crate::error::{Error, Result};

/// Mini-batch SGD settings. Loaded from the `[train]`-style key/value
/// sections of the codec configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs trained before early stopping and decay are allowed to act.
    pub min_epochs: usize,
    /// Stop after this many consecutive epochs without cross-validation
    /// improvement.
    pub patience: usize,
    /// Learning-rate factor applied after a non-improving epoch.
    pub lr_decay: f64,
    pub cv_fraction: f64,
    pub normalize_inputs: bool,
    pub normalize_outputs: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            learning_rate: 0.1,
            momentum: 0.9,
            batch_size: 32,
            max_epochs: 40,
            min_epochs: 5,
            patience: 3,
            lr_decay: 0.5,
            cv_fraction: 0.1,
            normalize_inputs: true,
            normalize_outputs: true,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub train_loss: Vec<f64>,
    pub cv_loss: Vec<f64>,
    /// Best cross-validation loss seen up to each epoch (non-increasing).
    pub best_cv_loss: Vec<f64>,
    pub best_epoch: usize,
}

/// Training pairs as row-aligned input and target matrices.
pub struct Dataset {
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
}

impl Dataset {
    pub fn new(inputs: Array2<f64>, targets: Array2<f64>) -> Result<Self> {
        if inputs.nrows() != targets.nrows() {
            return Err(Error::dimension(inputs.nrows(), targets.nrows()));
        }
        Ok(Self { inputs, targets })
    }

    pub fn from_pairs(pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<Self> {
        let (first_in, first_out) = pairs.first().ok_or(Error::EmptyCorpus)?;
        let (din, dout) = (first_in.len(), first_out.len());
        let mut inputs = Array2::zeros((pairs.len(), din));
        let mut targets = Array2::zeros((pairs.len(), dout));
        for (i, (x, t)) in pairs.iter().enumerate() {
            if x.len() != din {
                return Err(Error::dimension(din, x.len()));
            }
            if t.len() != dout {
                return Err(Error::dimension(dout, t.len()));
            }
            inputs.row_mut(i).assign(&ndarray::ArrayView1::from(x));
            targets.row_mut(i).assign(&ndarray::ArrayView1::from(t));
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Trains a feed-forward network with mini-batch SGD and momentum:
/// cross-entropy for softmax outputs, squared error for linear outputs.
///
/// A held-out tail of the data (`cv_fraction`) drives early stopping; tiny
/// datasets are validated on the training data itself. The returned weights
/// are those of the best validation epoch, rounded to single precision.
pub fn train_mlp(data: &Dataset, output_kind: OutputKind, cfg: &TrainConfig) -> Result<(MlpWeights, TrainingLog)> {
    if data.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let n_cv = ((data.len() as f64) * cfg.cv_fraction).floor() as usize;
    let (train_x, train_t, cv_x, cv_t) = if n_cv == 0 || n_cv >= data.len() {
        (
            data.inputs.view(),
            data.targets.view(),
            data.inputs.view(),
            data.targets.view(),
        )
    } else {
        let split = data.len() - n_cv;
        (
            data.inputs.slice(s![..split, ..]),
            data.targets.slice(s![..split, ..]),
            data.inputs.slice(s![split.., ..]),
            data.targets.slice(s![split.., ..]),
        )
    };

    let mut dims = vec![data.inputs.ncols()];
    dims.extend(&cfg.hidden);
    dims.push(data.targets.ncols());
    let mut net = MlpWeights::random(&dims, output_kind, &mut rng);
    if cfg.normalize_inputs {
        net.input_norm = Normalization::fit(train_x);
    }
    if cfg.normalize_outputs && output_kind == OutputKind::Linear {
        net.output_norm = Normalization::fit(train_t);
    }
    let x = net.input_norm.apply(train_x);
    let t = normalized_targets(&net, train_t);
    let cvx = net.input_norm.apply(cv_x);
    let cvt = normalized_targets(&net, cv_t);

    let mut velocity: Vec<(Array2<f64>, ndarray::Array1<f64>)> = net
        .layers
        .iter()
        .map(|l| (Array2::zeros(l.weights.raw_dim()), ndarray::Array1::zeros(l.bias.len())))
        .collect();
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut lr = cfg.learning_rate;
    let mut log = TrainingLog::default();
    let mut best = net.clone();
    let mut best_loss = net.loss(cvx.view(), cvt.view());
    let mut stale = 0;
    let batch = cfg.batch_size.max(1);

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let bx = x.select(Axis(0), chunk);
            let bt = t.select(Axis(0), chunk);
            let (loss, grads) = net.loss_and_gradients(bx.view(), bt.view());
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged(format!("non-finite loss at epoch {epoch}")));
            }
            epoch_loss += loss * chunk.len() as f64;
            for ((layer, grad), (vw, vb)) in net.layers.iter_mut().zip(&grads).zip(&mut velocity) {
                vw.zip_mut_with(&grad.weights, |v, g| *v = cfg.momentum * *v - lr * g);
                vb.zip_mut_with(&grad.bias, |v, g| *v = cfg.momentum * *v - lr * g);
                layer.weights += &*vw;
                layer.bias += &*vb;
            }
        }
        let cv_loss = net.loss(cvx.view(), cvt.view());
        if !cv_loss.is_finite() {
            return Err(Error::TrainingDiverged(format!(
                "non-finite validation loss at epoch {epoch}"
            )));
        }
        log.train_loss.push(epoch_loss / x.nrows() as f64);
        log.cv_loss.push(cv_loss);
        if cv_loss < best_loss {
            best_loss = cv_loss;
            best = net.clone();
            log.best_epoch = epoch;
            stale = 0;
        } else if epoch + 1 >= cfg.min_epochs {
            stale += 1;
            lr *= cfg.lr_decay;
            if stale >= cfg.patience {
                log.best_cv_loss.push(best_loss);
                break;
            }
        }
        log.best_cv_loss.push(best_loss);
    }

    best.round_to_f32();
    Ok((best, log))
}

fn normalized_targets(net: &MlpWeights, targets: ArrayView2<f64>) -> Array2<f64> {
    match net.output_kind {
        OutputKind::Softmax => targets.to_owned(),
        OutputKind::Linear => net.output_norm.apply(targets),
    }
}
