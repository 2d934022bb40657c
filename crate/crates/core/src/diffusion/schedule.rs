use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const COSINE_OFFSET: f64 = 0.008;
pub const MAX_BETA: f64 = 0.999;

/// How a schedule was built; stored alongside denoiser checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScheduleDescriptor {
    Cosine { steps: usize, offset: f64, max_beta: f64 },
    Explicit { steps: usize },
}

/// Noise tables for `T` diffusion steps, indexed from 1 (`ᾱ` also has `ᾱ_0 = 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
    descriptor: ScheduleDescriptor,
}

impl DiffusionSchedule {
    /// Cosine schedule: `ᾱ_t = f(t)/f(0)`, `f(t) = cos²(((t/T + s)/(1 + s))·π/2)`,
    /// `β_t = 1 − ᾱ_t/ᾱ_{t−1}` capped at 0.999.
    pub fn cosine(steps: usize) -> Result<Self> {
        if steps < 1 {
            return Err(Error::config("diffusion schedule needs at least one step"));
        }
        let s = COSINE_OFFSET;
        let f = |t: usize| {
            let x = ((t as f64 / steps as f64 + s) / (1.0 + s)) * std::f64::consts::FRAC_PI_2;
            x.cos().powi(2)
        };
        let f0 = f(0);
        let alpha_bars: Vec<f64> = (0..=steps).map(|t| f(t) / f0).collect();
        let betas = (1..=steps)
            .map(|t| (1.0 - alpha_bars[t] / alpha_bars[t - 1]).min(MAX_BETA))
            .collect();
        Ok(Self {
            betas,
            alpha_bars,
            descriptor: ScheduleDescriptor::Cosine { steps, offset: s, max_beta: MAX_BETA },
        })
    }

    /// Schedule from explicit `β_1..β_T`; `ᾱ` is their cumulative product of `1 − β`.
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::config("diffusion schedule needs at least one step"));
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(Error::config(format!("beta {b} outside (0, 1)")));
        }
        let mut alpha_bars = Vec::with_capacity(betas.len() + 1);
        alpha_bars.push(1.0);
        for b in &betas {
            let prev = *alpha_bars.last().expect("non-empty");
            alpha_bars.push(prev * (1.0 - b));
        }
        let steps = betas.len();
        Ok(Self { betas, alpha_bars, descriptor: ScheduleDescriptor::Explicit { steps } })
    }

    pub fn from_descriptor(d: ScheduleDescriptor) -> Result<Self> {
        match d {
            ScheduleDescriptor::Cosine { steps, offset, max_beta }
                if offset == COSINE_OFFSET && max_beta == MAX_BETA =>
            {
                Self::cosine(steps)
            }
            other => Err(Error::config(format!("cannot rebuild schedule from {other:?}"))),
        }
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn descriptor(&self) -> ScheduleDescriptor {
        self.descriptor
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        1.0 - self.betas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_invariants() {
        for steps in [1, 10, 1000] {
            let s = DiffusionSchedule::cosine(steps).unwrap();
            assert_eq!(s.alpha_bar(0), 1.0);
            for t in 1..=steps {
                assert!(s.beta(t) > 0.0 && s.beta(t) < 1.0, "T={steps} t={t} beta={}", s.beta(t));
                assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
            }
            assert!(s.alpha_bar(steps) < 1e-3);
        }
    }

    #[test]
    fn cosine_matches_closed_form() {
        let s = DiffusionSchedule::cosine(1000).unwrap();
        let f = |t: f64| (((t / 1000.0 + 0.008) / 1.008) * std::f64::consts::FRAC_PI_2).cos().powi(2);
        for t in [1usize, 250, 500, 999] {
            let want = f(t as f64) / f(0.0);
            assert!((s.alpha_bar(t) - want).abs() < 1e-15);
        }
        assert_eq!(s.beta(1000), MAX_BETA);
    }

    #[test]
    fn rejects_zero_steps() {
        assert!(DiffusionSchedule::cosine(0).is_err());
        assert!(DiffusionSchedule::from_betas(vec![]).is_err());
        assert!(DiffusionSchedule::from_betas(vec![1.0]).is_err());
    }

    #[test]
    fn explicit_cumulative_product() {
        let s = DiffusionSchedule::from_betas(vec![0.5, 0.5]).unwrap();
        assert_eq!(s.alpha_bar(1), 0.5);
        assert_eq!(s.alpha_bar(2), 0.25);
    }
}
