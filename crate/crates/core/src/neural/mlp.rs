use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputKind {
    Softmax,
    Linear,
}

/// Per-dimension affine normalization: `(x - mean) / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
}

impl Normalization {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: Array1::zeros(dim),
            scale: Array1::ones(dim),
        }
    }

    /// Mean and standard deviation of the rows of `data`; near-constant
    /// columns get unit scale.
    pub fn fit(data: ArrayView2<f64>) -> Self {
        let mean = data.mean_axis(Axis(0)).expect("non-empty data");
        let scale = data.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-8 { s } else { 1.0 });
        Self { mean, scale }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        (&x - &self.mean) / &self.scale
    }

    pub fn invert(&self, x: ArrayView2<f64>) -> Array2<f64> {
        &x * &self.scale + &self.mean
    }
}

/// One affine layer; `weights` is `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }
}

/// Feed-forward network: sigmoid hidden layers, softmax or linear output,
/// with input normalization and output de-normalization folded in.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpWeights {
    pub layers: Vec<Layer>,
    pub output_kind: OutputKind,
    pub input_norm: Normalization,
    pub output_norm: Normalization,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

/// Per-layer parameter gradients, same shapes as the layers.
pub type Gradients = Vec<Layer>;

impl MlpWeights {
    /// Xavier-uniform initialization with zero biases and identity
    /// normalization.
    pub fn random(dims: &[usize], output_kind: OutputKind, rng: &mut impl Rng) -> Self {
        assert!(dims.len() >= 2, "a network needs at least two layer sizes");
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Layer {
                    weights: Array2::from_shape_simple_fn((fan_out, fan_in), || rng.random_range(-limit..limit)),
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Self {
            layers,
            output_kind,
            input_norm: Normalization::identity(dims[0]),
            output_norm: Normalization::identity(dims[dims.len() - 1]),
        }
    }

    /// All-zero parameters with identity normalization.
    pub fn zeros(dims: &[usize], output_kind: OutputKind) -> Self {
        let layers = dims
            .windows(2)
            .map(|w| Layer {
                weights: Array2::zeros((w[1], w[0])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Self {
            layers,
            output_kind,
            input_norm: Normalization::identity(dims[0]),
            output_norm: Normalization::identity(dims[dims.len() - 1]),
        }
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(Layer::output_dim));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(Layer::output_dim).unwrap_or(0)
    }

    pub fn parameter_count(&self) -> usize {
        crate::metrics::count_parameters(&self.layer_dims())
    }

    pub fn validate(&self) -> Result<()> {
        for w in self.layers.windows(2) {
            if w[0].output_dim() != w[1].input_dim() {
                return Err(Error::dimension(w[0].output_dim(), w[1].input_dim()));
            }
        }
        for layer in &self.layers {
            if layer.bias.len() != layer.output_dim() {
                return Err(Error::dimension(layer.output_dim(), layer.bias.len()));
            }
            if layer.weights.iter().chain(&layer.bias).any(|v| !v.is_finite()) {
                return Err(Error::TrainingDiverged("non-finite parameter".into()));
            }
        }
        if self.input_norm.dim() != self.input_dim() {
            return Err(Error::dimension(self.input_dim(), self.input_norm.dim()));
        }
        if self.output_norm.dim() != self.output_dim() {
            return Err(Error::dimension(self.output_dim(), self.output_norm.dim()));
        }
        Ok(())
    }

    /// Forward pass on already-normalized inputs, returning every layer's
    /// activation (input first, network output last).
    pub(crate) fn activations(&self, x: Array2<f64>) -> Vec<Array2<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x);
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = acts[i].dot(&layer.weights.t()) + &layer.bias;
            if i < last {
                z.mapv_inplace(sigmoid);
            } else if self.output_kind == OutputKind::Softmax {
                softmax_rows(&mut z);
            }
            acts.push(z);
        }
        acts
    }

    /// Batched forward pass; rows are frames.
    pub fn forward_batch(&self, input: ArrayView2<f64>) -> Result<Array2<f64>> {
        if input.ncols() != self.input_dim() {
            return Err(Error::dimension(self.input_dim(), input.ncols()));
        }
        let x = self.input_norm.apply(input);
        let out = self.activations(x).pop().expect("at least one layer");
        Ok(match self.output_kind {
            OutputKind::Softmax => out,
            OutputKind::Linear => self.output_norm.invert(out.view()),
        })
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView1::from(input).insert_axis(Axis(0));
        Ok(self.forward_batch(x)?.row(0).to_vec())
    }

    /// Mean loss over the batch and its parameter gradients, computed in the
    /// normalized input/target space. Cross-entropy for softmax outputs,
    /// half squared error summed over outputs for linear outputs.
    pub fn loss_and_gradients(&self, x: ArrayView2<f64>, target: ArrayView2<f64>) -> (f64, Gradients) {
        let batch = x.nrows() as f64;
        let acts = self.activations(x.to_owned());
        let output = acts.last().expect("output layer");
        let loss = self.batch_loss(output, target);
        // softmax + cross-entropy and linear + squared error share this delta
        let mut delta = (output - &target) / batch;
        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let a_prev = &acts[l];
            grads.push(Layer {
                weights: delta.t().dot(a_prev),
                bias: delta.sum_axis(Axis(0)),
            });
            if l > 0 {
                let back = delta.dot(&self.layers[l].weights);
                delta = back * a_prev.mapv(|a| a * (1.0 - a));
            }
        }
        grads.reverse();
        (loss, grads)
    }

    /// Loss only, in normalized space.
    pub fn loss(&self, x: ArrayView2<f64>, target: ArrayView2<f64>) -> f64 {
        let output = self.activations(x.to_owned()).pop().expect("output layer");
        self.batch_loss(&output, target)
    }

    fn batch_loss(&self, output: &Array2<f64>, target: ArrayView2<f64>) -> f64 {
        let batch = output.nrows() as f64;
        let pairs = output.iter().zip(target.iter());
        match self.output_kind {
            OutputKind::Softmax => {
                -pairs
                    .map(|(y, t)| if *t > 0.0 { t * y.max(1e-300).ln() } else { 0.0 })
                    .sum::<f64>()
                    / batch
            }
            OutputKind::Linear => 0.5 * pairs.map(|(y, t)| (y - t).powi(2)).sum::<f64>() / batch,
        }
    }

    /// Rounds every stored value to single precision so that the weight file
    /// reproduces the network exactly.
    pub fn round_to_f32(&mut self) {
        let round = |v: &mut f64| *v = *v as f32 as f64;
        for layer in &mut self.layers {
            layer.weights.iter_mut().for_each(round);
            layer.bias.iter_mut().for_each(round);
        }
        for norm in [&mut self.input_norm, &mut self.output_norm] {
            norm.mean.iter_mut().for_each(round);
            norm.scale.iter_mut().for_each(round);
        }
    }
}

/// Free-function form of the forward pass.
pub fn mlp_forward(weights: &MlpWeights, input: &[f64]) -> Result<Vec<f64>> {
    weights.forward(input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_linear_layer() {
        let mut w = MlpWeights::zeros(&[3, 3], OutputKind::Linear);
        w.layers[0].weights = Array2::eye(3);
        assert_eq!(w.forward(&[1.0, -2.0, 0.5]).unwrap(), vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn equal_logits_give_even_softmax() {
        let w = MlpWeights::zeros(&[4, 2], OutputKind::Softmax);
        assert_eq!(w.forward(&[0.3, 0.1, -1.0, 2.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn toy_network_matches_hand_computation() {
        // 2 -> 2 (sigmoid) -> 2 (softmax)
        let mut w = MlpWeights::zeros(&[2, 2, 2], OutputKind::Softmax);
        w.layers[0].weights = array![[1.0, -1.0], [0.5, 2.0]];
        w.layers[0].bias = array![0.0, -1.0];
        w.layers[1].weights = array![[2.0, 0.0], [-1.0, 1.0]];
        w.layers[1].bias = array![0.5, 0.0];
        let out = w.forward(&[1.0, 0.5]).unwrap();

        // hidden pre-activations: [1 - 0.5, 0.5 + 1 - 1] = [0.5, 0.5]
        let h = 1.0 / (1.0 + (-0.5f64).exp());
        // logits: [2h + 0.5, -h + h] = [2h + 0.5, 0]
        let l0 = 2.0 * h + 0.5;
        let p0 = l0.exp() / (l0.exp() + 1.0);
        assert!((out[0] - p0).abs() < 1e-9);
        assert!((out[1] - (1.0 - p0)).abs() < 1e-9);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let w = MlpWeights::zeros(&[3, 2], OutputKind::Softmax);
        assert!(matches!(
            w.forward(&[1.0, 2.0]),
            Err(Error::Dimension { expected: 3, actual: 2 })
        ));
    }

    #[test]
    fn zero_linear_net_outputs_stored_means() {
        let mut w = MlpWeights::zeros(&[4, 3, 2], OutputKind::Linear);
        w.output_norm.mean = array![1.5, -0.25];
        w.output_norm.scale = array![3.0, 7.0];
        assert_eq!(w.forward(&[1.0, 1.0, 1.0, 1.0]).unwrap(), vec![1.5, -0.25]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = MlpWeights::random(&[5, 7, 4], OutputKind::Softmax, &mut rng);
        let x = Array2::from_shape_simple_fn((50, 5), || rng.random_range(-10.0..10.0));
        let y = w.forward_batch(x.view()).unwrap();
        for row in y.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }
}
