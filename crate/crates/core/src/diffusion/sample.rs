//! Ancestral sampling with fixed reverse variance `σ_t² = β_t`.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use super::denoiser::NoisePredictor;
use super::schedule::DiffusionSchedule;
use crate::error::{Error, Result};

/// Draws one sample conditioned on trajectory timestep `timestep`.
pub fn generate<R: Rng + ?Sized>(
    d: &dyn NoisePredictor,
    timestep: usize,
    sched: &DiffusionSchedule,
    rng: &mut R,
) -> Result<Vec<f64>> {
    Ok(generate_batch(d, &[timestep], sched, rng)?.into_raw_vec_and_offset().0)
}

/// One sample per entry of `timesteps`, denoised together.
///
/// `x_{t−1} = (x_t − β_t/√(1−ᾱ_t)·ε̂)/√α_t + √β_t·z` for `t = T..1`, `z = 0` at `t = 1`.
pub fn generate_batch<R: Rng + ?Sized>(
    d: &dyn NoisePredictor,
    timesteps: &[usize],
    sched: &DiffusionSchedule,
    rng: &mut R,
) -> Result<Array2<f64>> {
    let (n, dim) = (timesteps.len(), d.sample_dim());
    let mut x = Array2::from_shape_simple_fn((n, dim), || rng.sample::<f64, _>(StandardNormal));
    let mut steps = vec![0usize; n];
    for t in (1..=sched.steps()).rev() {
        steps.fill(t);
        let eps_hat = d.predict(x.view(), &steps, timesteps);
        let beta = sched.beta(t);
        let coef = beta / (1.0 - sched.alpha_bar(t)).sqrt();
        let inv_sqrt_alpha = 1.0 / sched.alpha(t).sqrt();
        x.zip_mut_with(&eps_hat, |xv, &e| *xv = inv_sqrt_alpha * (*xv - coef * e));
        if t > 1 {
            let sigma = beta.sqrt();
            x.mapv_inplace(|v| v + sigma * rng.sample::<f64, _>(StandardNormal));
        }
        check_finite(x.view(), t)?;
    }
    Ok(x)
}

fn check_finite(x: ArrayView2<f64>, step: usize) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Generation { step, reason: "non-finite intermediate sample".into() })
    }
}
