//! ε-prediction network, forward corruption and the training loss.

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use super::schedule::DiffusionSchedule;
use crate::error::{Error, Result};
use crate::nn::{time_embed_into, AdamState, Gradients, Mlp};

/// Predicts the noise that was mixed into `x_t`.
pub trait NoisePredictor {
    fn sample_dim(&self) -> usize;

    /// `x_t` is `(batch, sample_dim)`; `steps[n]` is the diffusion step and
    /// `timesteps[n]` the trajectory timestep of row `n`.
    fn predict(&self, x_t: ArrayView2<f64>, steps: &[usize], timesteps: &[usize]) -> Array2<f64>;
}

/// MLP over `[x_t ‖ embed(step) ‖ embed(timestep)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser {
    pub net: Mlp,
    sample_dim: usize,
    embed_dim: usize,
}

impl Denoiser {
    pub fn new<R: Rng + ?Sized>(sample_dim: usize, embed_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let mut sizes = vec![sample_dim + 2 * embed_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(sample_dim);
        Self::from_net(Mlp::init(&sizes, rng)?, sample_dim, embed_dim)
    }

    pub fn from_net(net: Mlp, sample_dim: usize, embed_dim: usize) -> Result<Self> {
        if embed_dim < 2 || !embed_dim.is_multiple_of(2) {
            return Err(Error::config(format!("embedding dimension must be even, got {embed_dim}")));
        }
        if net.input_dim() != sample_dim + 2 * embed_dim || net.output_dim() != sample_dim {
            return Err(Error::config(format!(
                "denoiser net is {}→{}, expected {}→{}",
                net.input_dim(),
                net.output_dim(),
                sample_dim + 2 * embed_dim,
                sample_dim
            )));
        }
        Ok(Self { net, sample_dim, embed_dim })
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    fn build_input(&self, x_t: ArrayView2<f64>, steps: &[usize], timesteps: &[usize]) -> Array2<f64> {
        let (n, d, e) = (x_t.nrows(), self.sample_dim, self.embed_dim);
        assert_eq!(x_t.ncols(), d, "sample dim mismatch");
        assert!(steps.len() == n && timesteps.len() == n, "conditioning length mismatch");
        let mut input = Array2::zeros((n, d + 2 * e));
        input.slice_mut(s![.., ..d]).assign(&x_t);
        let mut cache = EmbedCache::new(e);
        for (row, (&t, &j)) in input.axis_iter_mut(Axis(0)).zip(steps.iter().zip(timesteps)) {
            let row = row.into_slice().expect("row-major");
            row[d..d + e].copy_from_slice(cache.get(t));
            row[d + e..].copy_from_slice(cache.get(j));
        }
        input
    }
}

struct EmbedCache {
    dim: usize,
    table: Vec<Option<Vec<f64>>>,
}

impl EmbedCache {
    fn new(dim: usize) -> Self {
        Self { dim, table: Vec::new() }
    }

    fn get(&mut self, t: usize) -> &[f64] {
        if t >= self.table.len() {
            self.table.resize(t + 1, None);
        }
        let dim = self.dim;
        self.table[t].get_or_insert_with(|| {
            let mut v = vec![0.0; dim];
            time_embed_into(t, dim, &mut v).expect("dimension validated at construction");
            v
        })
    }
}

impl NoisePredictor for Denoiser {
    fn sample_dim(&self) -> usize {
        self.sample_dim
    }

    fn predict(&self, x_t: ArrayView2<f64>, steps: &[usize], timesteps: &[usize]) -> Array2<f64> {
        self.net.forward(self.build_input(x_t, steps, timesteps).view())
    }
}

/// `x_t = √ᾱ_t·x0 + √(1−ᾱ_t)·eps`; `t = 0` returns `x0`.
pub fn q_sample(x0: &[f64], t: usize, eps: &[f64], sched: &DiffusionSchedule) -> Result<Vec<f64>> {
    if t > sched.steps() {
        return Err(Error::input(format!("diffusion step {t} outside 0..={}", sched.steps())));
    }
    if x0.len() != eps.len() {
        return Err(Error::input("x0 and eps lengths differ"));
    }
    let ab = sched.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0.iter().zip(eps).map(|(x, e)| a * x + b * e).collect())
}

fn corrupt(x0: ArrayView2<f64>, steps: &[usize], eps: &Array2<f64>, sched: &DiffusionSchedule) -> Array2<f64> {
    let mut x_t = x0.to_owned();
    for ((mut row, e), &t) in x_t.axis_iter_mut(Axis(0)).zip(eps.axis_iter(Axis(0))).zip(steps) {
        let ab = sched.alpha_bar(t);
        let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
        row.zip_mut_with(&e, |x, &n| *x = a * *x + b * n);
    }
    x_t
}

/// Uniform diffusion steps in `1..=T` and standard-normal noise for a batch.
pub fn draw_noise<R: Rng + ?Sized>(rows: usize, dim: usize, sched: &DiffusionSchedule, rng: &mut R) -> (Vec<usize>, Array2<f64>) {
    let steps = (0..rows).map(|_| rng.random_range(1..=sched.steps())).collect();
    let eps = Array2::from_shape_simple_fn((rows, dim), || rng.sample(StandardNormal));
    (steps, eps)
}

/// Mean over the batch of `‖eps − ε̂(x_t, t, j)‖²` for given steps and noise,
/// with gradients to the denoiser parameters.
pub fn denoise_loss_fixed(
    d: &Denoiser,
    x0: ArrayView2<f64>,
    timesteps: &[usize],
    steps: &[usize],
    eps: &Array2<f64>,
    sched: &DiffusionSchedule,
) -> (f64, Gradients) {
    let x_t = corrupt(x0, steps, eps, sched);
    let input = d.build_input(x_t.view(), steps, timesteps);
    let trace = d.net.forward_train(input.view());
    let diff = trace.output() - eps;
    let n = x0.nrows().max(1) as f64;
    let loss = diff.iter().map(|v| v * v).sum::<f64>() / n;
    let d_out = diff * (2.0 / n);
    let (grads, _) = d.net.backward(&trace, d_out.view());
    (loss, grads)
}

/// Batch diffusion loss with freshly drawn steps and noise.
pub fn denoise_loss_batch<R: Rng + ?Sized>(
    d: &Denoiser,
    x0: ArrayView2<f64>,
    timesteps: &[usize],
    sched: &DiffusionSchedule,
    rng: &mut R,
) -> (f64, Gradients) {
    let (steps, eps) = draw_noise(x0.nrows(), x0.ncols(), sched, rng);
    denoise_loss_fixed(d, x0, timesteps, &steps, &eps, sched)
}

/// Single-sample loss `‖eps − ε̂(x_t, t, j)‖²` and its gradient.
pub fn denoise_loss<R: Rng + ?Sized>(
    d: &Denoiser,
    x0: &[f64],
    timestep: usize,
    sched: &DiffusionSchedule,
    rng: &mut R,
) -> Result<(f64, Gradients)> {
    if x0.len() != d.sample_dim {
        return Err(Error::input(format!("sample has {} dims, denoiser expects {}", x0.len(), d.sample_dim)));
    }
    let x = ArrayView2::from_shape((1, x0.len()), x0).expect("contiguous");
    Ok(denoise_loss_batch(d, x, &[timestep], sched, rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorNorm {
    L1,
    SquaredL2,
}

/// Mean over rows of `‖eps − ε̂‖` under the chosen norm, one random step per row.
pub fn noise_error<R: Rng + ?Sized>(
    pred: &dyn NoisePredictor,
    x0: ArrayView2<f64>,
    timesteps: &[usize],
    sched: &DiffusionSchedule,
    norm: ErrorNorm,
    rng: &mut R,
) -> f64 {
    if x0.nrows() == 0 {
        return f64::NAN;
    }
    let (steps, eps) = draw_noise(x0.nrows(), x0.ncols(), sched, rng);
    let x_t = corrupt(x0, &steps, &eps, sched);
    let diff = pred.predict(x_t.view(), &steps, timesteps) - &eps;
    let total: f64 = match norm {
        ErrorNorm::L1 => diff.iter().map(|v| v.abs()).sum(),
        ErrorNorm::SquaredL2 => diff.iter().map(|v| v * v).sum(),
    };
    total / x0.nrows() as f64
}

/// Runs `steps` minibatch Adam updates on uniformly drawn rows of `x0`.
/// Returns the mean training loss.
#[allow(clippy::too_many_arguments)]
pub fn train_denoiser<R: Rng + ?Sized>(
    d: &mut Denoiser,
    adam: &mut AdamState,
    x0: ArrayView2<f64>,
    timesteps: &[usize],
    steps: usize,
    batch_size: usize,
    sched: &DiffusionSchedule,
    rng: &mut R,
) -> Result<f64> {
    if x0.nrows() == 0 || steps == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for _ in 0..steps {
        let idx: Vec<usize> = (0..batch_size).map(|_| rng.random_range(0..x0.nrows())).collect();
        let xb = x0.select(Axis(0), &idx);
        let jb: Vec<usize> = idx.iter().map(|&i| timesteps[i]).collect();
        let (loss, grads) = denoise_loss_batch(d, xb.view(), &jb, sched, rng);
        adam.step(&mut d.net, &grads)?;
        total += loss;
    }
    Ok(total / steps as f64)
}
