//! Behavioral cloning: mean squared error between policy output and expert
//! action, minimized with minibatch Adam.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

use super::adam::{AdamState, UpdateMask};
use super::mlp::{Gradients, Mlp};
use crate::error::{Error, Result};

/// Paired network inputs (state ⊕ task one-hot) and target actions.
#[derive(Debug, Clone, PartialEq)]
pub struct BcData {
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
}

impl BcData {
    pub fn new(inputs: Array2<f64>, targets: Array2<f64>) -> Result<Self> {
        if inputs.nrows() != targets.nrows() {
            return Err(Error::config(format!(
                "{} inputs but {} targets",
                inputs.nrows(),
                targets.nrows()
            )));
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

/// Extra differentiable term added to the data loss (e.g. an EWC penalty).
pub trait Regularizer {
    fn penalty(&self, params: &Mlp) -> f64;
    fn add_gradient(&self, params: &Mlp, grads: &mut Gradients);
}

#[derive(Clone, Copy)]
pub struct TrainOptions<'a> {
    pub batch_size: usize,
    pub regularizer: Option<&'a dyn Regularizer>,
    pub mask: Option<&'a UpdateMask>,
}

impl<'a> TrainOptions<'a> {
    pub fn new(batch_size: usize) -> Self {
        Self { batch_size, regularizer: None, mask: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochReport {
    /// Mean squared error over the epoch, measured before each minibatch update.
    pub mean_loss: f64,
    pub batches: usize,
    /// Set when the dataset was empty and nothing was trained.
    pub empty: bool,
}

/// `E‖π(x) − a‖²` over the batch and its gradient.
pub fn mse_loss_grad(policy: &Mlp, inputs: ArrayView2<f64>, targets: ArrayView2<f64>) -> (f64, Gradients) {
    let trace = policy.forward_train(inputs);
    let diff = trace.output() - &targets;
    let n = inputs.nrows().max(1) as f64;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    let d_out = diff * (2.0 / n);
    let (grads, _) = policy.backward(&trace, d_out.view());
    (loss, grads)
}

pub fn mse_loss(policy: &Mlp, inputs: ArrayView2<f64>, targets: ArrayView2<f64>) -> f64 {
    let out = policy.forward(inputs);
    let n = inputs.nrows().max(1) as f64;
    (out - targets).iter().map(|d| d * d).sum::<f64>() / n
}

/// One shuffled pass over `data` in minibatches of `opts.batch_size`.
pub fn bc_train_epoch<R: Rng + ?Sized>(
    policy: &mut Mlp,
    adam: &mut AdamState,
    data: &BcData,
    opts: TrainOptions<'_>,
    rng: &mut R,
) -> Result<EpochReport> {
    if data.is_empty() {
        log::warn!("bc_train_epoch called with an empty dataset");
        return Ok(EpochReport { mean_loss: 0.0, batches: 0, empty: true });
    }
    if opts.batch_size == 0 {
        return Err(Error::config("batch size must be positive"));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    let mut batches = 0;
    for chunk in order.chunks(opts.batch_size) {
        let x = data.inputs.select(Axis(0), chunk);
        let y = data.targets.select(Axis(0), chunk);
        let (loss, mut grads) = mse_loss_grad(policy, x.view(), y.view());
        if let Some(reg) = opts.regularizer {
            reg.add_gradient(policy, &mut grads);
        }
        adam.step_masked(policy, &grads, opts.mask)?;
        total += loss * chunk.len() as f64;
        batches += 1;
    }
    Ok(EpochReport { mean_loss: total / data.len() as f64, batches, empty: false })
}
