//! Dense feed-forward networks with hand-written reverse-mode gradients.
//!
//! Weights are stored `(out, in)`; batched inputs are `(batch, in)` row-major,
//! so a layer computes `y = x Wᵀ + b`. Hidden layers use ReLU and the output
//! layer is linear.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply_inplace(self, z: &mut Array2<f64>) {
        if self == Activation::Relu {
            z.mapv_inplace(|v| v.max(0.0));
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// Parameters of a multilayer perceptron.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Per-layer inputs recorded during a training forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    inputs: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl Trace {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

/// Gradient (or any other same-shaped) buffer for an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Flat, ordered access to every parameter tensor.
///
/// Order is `layer0.weight, layer0.bias, layer1.weight, ...` for every
/// implementor, so tensors of different containers can be zipped.
pub trait Tensors {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;
}

pub fn tensor_name(index: usize) -> String {
    let layer = index / 2;
    if index.is_multiple_of(2) {
        format!("layer{layer}.weight")
    } else {
        format!("layer{layer}.bias")
    }
}

impl Mlp {
    /// Builds a network from explicit layers, checking that dimensions chain
    /// and that every entry is finite.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("an MLP needs at least one layer"));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.out_dim() {
                return Err(Error::config(format!(
                    "layer {i}: bias length {} does not match output dim {}",
                    layer.bias.len(),
                    layer.out_dim()
                )));
            }
            if i > 0 && layers[i - 1].out_dim() != layer.in_dim() {
                return Err(Error::config(format!(
                    "layer {i}: input dim {} does not chain with previous output dim {}",
                    layer.in_dim(),
                    layers[i - 1].out_dim()
                )));
            }
            if !layer.weight.iter().chain(layer.bias.iter()).all(|v| v.is_finite()) {
                return Err(Error::config(format!("layer {i}: non-finite parameter")));
            }
        }
        Ok(Self { layers })
    }

    /// Uniform fan-in initialization, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` for
    /// weights and biases. `sizes = [in, hidden.., out]`.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::config(format!("invalid layer sizes {sizes:?}")));
        }
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (1.0 / fan_in as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
                Layer {
                    weight: Array2::from_shape_fn((fan_out, fan_in), |_| dist.sample(rng)),
                    bias: Array1::from_shape_fn(fan_out, |_| dist.sample(rng)),
                    activation: if i == last { Activation::Identity } else { Activation::Relu },
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Shape-checked single-sample forward pass.
    pub fn apply(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::config(format!(
                "input length {} does not match network input dim {}",
                input.len(),
                self.input_dim()
            )));
        }
        if !input.iter().all(|v| v.is_finite()) {
            return Err(Error::input("non-finite network input"));
        }
        let x = ArrayView2::from_shape((1, input.len()), input).expect("contiguous row");
        Ok(self.forward(x).into_raw_vec_and_offset().0)
    }

    /// Batched forward pass. Panics if `x.ncols()` differs from the input dim.
    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(x.ncols(), self.input_dim(), "input dim mismatch");
        let mut h = x.to_owned();
        for layer in &self.layers {
            h = affine(&h.view(), layer);
        }
        h
    }

    /// Forward pass that records what [`Mlp::backward`] needs.
    pub fn forward_train(&self, x: ArrayView2<f64>) -> Trace {
        assert_eq!(x.ncols(), self.input_dim(), "input dim mismatch");
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for layer in &self.layers {
            let next = affine(&h.view(), layer);
            inputs.push(h);
            h = next;
        }
        Trace { inputs, output: h }
    }

    /// Backpropagates `d_out = dLoss/dOutput` (shape `(batch, out)`).
    ///
    /// Returns parameter gradients summed over the batch and the gradient with
    /// respect to the network input.
    pub fn backward(&self, trace: &Trace, d_out: ArrayView2<f64>) -> (Gradients, Array2<f64>) {
        let (deltas, d_input) = self.deltas(trace, d_out);
        let mut grads = Gradients::zeros_like(self);
        for (l, delta) in deltas.iter().enumerate() {
            grads.weights[l] = delta.t().dot(&trace.inputs[l]);
            grads.biases[l] = delta.sum_axis(Axis(0));
        }
        (grads, d_input)
    }

    /// Mean over the batch of squared per-sample parameter gradients, where
    /// row `n` of `d_out` is the gradient of sample `n`'s own loss.
    ///
    /// Uses the outer-product structure of dense layers: the per-sample weight
    /// gradient is `delta_n ⊗ input_n`, so its elementwise square summed over
    /// samples is `(delta²)ᵀ (input²)`.
    pub fn squared_sample_gradients(&self, trace: &Trace, d_out: ArrayView2<f64>) -> Gradients {
        let batch = d_out.nrows().max(1) as f64;
        let (deltas, _) = self.deltas(trace, d_out);
        let mut out = Gradients::zeros_like(self);
        for (l, delta) in deltas.iter().enumerate() {
            let d2 = delta.mapv(|v| v * v);
            let x2 = trace.inputs[l].mapv(|v| v * v);
            out.weights[l] = d2.t().dot(&x2) / batch;
            out.biases[l] = d2.sum_axis(Axis(0)) / batch;
        }
        out
    }

    fn deltas(&self, trace: &Trace, d_out: ArrayView2<f64>) -> (Vec<Array2<f64>>, Array2<f64>) {
        assert_eq!(d_out.dim(), trace.output.dim(), "output gradient shape mismatch");
        let n = self.layers.len();
        let mut deltas = vec![Array2::zeros((0, 0)); n];
        let mut delta = d_out.to_owned();
        if self.layers[n - 1].activation == Activation::Relu {
            relu_mask(&mut delta, &trace.output);
        }
        for l in (0..n).rev() {
            let d_in = delta.dot(&self.layers[l].weight);
            deltas[l] = delta;
            delta = d_in;
            if l > 0 && self.layers[l - 1].activation == Activation::Relu {
                relu_mask(&mut delta, &trace.inputs[l]);
            }
        }
        (deltas, delta)
    }
}

fn affine(x: &ArrayView2<f64>, layer: &Layer) -> Array2<f64> {
    let mut z = x.dot(&layer.weight.t());
    z += &layer.bias;
    layer.activation.apply_inplace(&mut z);
    z
}

fn relu_mask(delta: &mut Array2<f64>, activated: &Array2<f64>) {
    ndarray::Zip::from(delta)
        .and(activated)
        .for_each(|d, &a| {
            if a <= 0.0 {
                *d = 0.0;
            }
        });
}

impl Gradients {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            weights: mlp.layers.iter().map(|l| Array2::zeros(l.weight.raw_dim())).collect(),
            biases: mlp.layers.iter().map(|l| Array1::zeros(l.bias.len())).collect(),
        }
    }

    pub fn same_shape(&self, mlp: &Mlp) -> bool {
        self.weights.len() == mlp.layers.len()
            && self
                .weights
                .iter()
                .zip(&self.biases)
                .zip(&mlp.layers)
                .all(|((w, b), l)| w.dim() == l.weight.dim() && b.len() == l.bias.len())
    }

    pub fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= k);
        }
    }

    /// `self += k * other`.
    pub fn add_scaled(&mut self, other: &Gradients, k: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += k * y);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .fold(0.0, |m: f64, v| m.max(v.abs()))
    }
}

impl Tensors for Mlp {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weight.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }
}

impl Tensors for Gradients {
    fn tensors(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| {
                [
                    w.as_slice().expect("standard layout"),
                    b.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| {
                [
                    w.as_slice_mut().expect("standard layout"),
                    b.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;
    use ndarray::array;

    fn reference_forward(mlp: &Mlp, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for layer in mlp.layers() {
            let mut next = vec![0.0; layer.out_dim()];
            for (o, slot) in next.iter_mut().enumerate() {
                let mut acc = layer.bias[o];
                for (i, &hi) in h.iter().enumerate() {
                    acc += layer.weight[[o, i]] * hi;
                }
                *slot = match layer.activation {
                    Activation::Relu => acc.max(0.0),
                    Activation::Identity => acc,
                };
            }
            h = next;
        }
        h
    }

    #[test]
    fn zero_weights_return_bias() {
        let mlp = Mlp::new(vec![Layer {
            weight: Array2::zeros((2, 3)),
            bias: array![0.5, -1.5],
            activation: Activation::Identity,
        }])
        .unwrap();
        assert_eq!(mlp.apply(&[1.0, 2.0, 3.0]).unwrap(), vec![0.5, -1.5]);
    }

    #[test]
    fn identity_layer_is_identity() {
        let mlp = Mlp::new(vec![Layer {
            weight: Array2::eye(3),
            bias: Array1::zeros(3),
            activation: Activation::Identity,
        }])
        .unwrap();
        assert_eq!(mlp.apply(&[1.0, -2.0, 3.5]).unwrap(), vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn forward_matches_scalar_reference() {
        let mut rng = SeedTree::new(3).rng();
        let mlp = Mlp::init(&[5, 7, 3], &mut rng).unwrap();
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = mlp.apply(&x).unwrap();
        let want = reference_forward(&mlp, &x);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_and_finiteness_errors() {
        let mut rng = SeedTree::new(0).rng();
        let mlp = Mlp::init(&[2, 4, 1], &mut rng).unwrap();
        assert!(matches!(mlp.apply(&[1.0]), Err(Error::Config(_))));
        assert!(matches!(mlp.apply(&[1.0, f64::NAN]), Err(Error::Input(_))));
        let bad = Mlp::new(vec![
            Layer { weight: Array2::zeros((3, 2)), bias: Array1::zeros(3), activation: Activation::Relu },
            Layer { weight: Array2::zeros((1, 4)), bias: Array1::zeros(1), activation: Activation::Identity },
        ]);
        assert!(matches!(bad, Err(Error::Config(_))));
        assert!(Mlp::new(vec![]).is_err());
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let mut rng = SeedTree::new(9).rng();
        let mlp = Mlp::init(&[16, 8, 2], &mut rng).unwrap();
        for l in mlp.layers() {
            let bound = (1.0 / l.in_dim() as f64).sqrt();
            assert!(l.weight.iter().all(|w| w.abs() <= bound));
        }
        assert_eq!(mlp.layers()[0].activation, Activation::Relu);
        assert_eq!(mlp.layers()[1].activation, Activation::Identity);
    }

    #[test]
    fn squared_sample_gradients_match_loop() {
        let mut rng = SeedTree::new(11).rng();
        let mlp = Mlp::init(&[3, 5, 2], &mut rng).unwrap();
        let x = Array2::from_shape_fn((4, 3), |_| rng.random_range(-1.0..1.0));
        let d = Array2::from_shape_fn((4, 2), |_| rng.random_range(-1.0..1.0));
        let trace = mlp.forward_train(x.view());
        let fast = mlp.squared_sample_gradients(&trace, d.view());
        let mut slow = Gradients::zeros_like(&mlp);
        for n in 0..4 {
            let xn = x.slice(ndarray::s![n..n + 1, ..]);
            let tn = mlp.forward_train(xn);
            let (g, _) = mlp.backward(&tn, d.slice(ndarray::s![n..n + 1, ..]));
            let mut g2 = g.clone();
            for t in g2.tensors_mut() {
                t.iter_mut().for_each(|v| *v *= *v);
            }
            slow.add_scaled(&g2, 0.25);
        }
        for (a, b) in fast.tensors().iter().zip(slow.tensors()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
