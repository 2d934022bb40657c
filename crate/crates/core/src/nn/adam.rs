use serde::{Deserialize, Serialize};

use super::mlp::{tensor_name, Gradients, Mlp, Tensors};
use crate::error::{Error, Result};

/// Adam hyperparameters. `Default` carries the reference learner values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, weight_decay: 0.0 }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.learning_rate = lr;
        self
    }
}

/// Per-entry trainable flags, aligned with [`Tensors`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateMask {
    pub tensors: Vec<Vec<bool>>,
}

impl UpdateMask {
    pub fn all(mlp: &Mlp, value: bool) -> Self {
        Self { tensors: mlp.tensors().iter().map(|t| vec![value; t.len()]).collect() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Gradients,
    pub v: Gradients,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &Mlp) -> Self {
        Self { config, step: 0, m: Gradients::zeros_like(params), v: Gradients::zeros_like(params) }
    }

    pub fn step(&mut self, params: &mut Mlp, grads: &Gradients) -> Result<()> {
        self.step_masked(params, grads, None)
    }

    /// One Adam update with bias correction. Entries whose mask flag is
    /// `false` keep their value and their moment estimates.
    pub fn step_masked(&mut self, params: &mut Mlp, grads: &Gradients, mask: Option<&UpdateMask>) -> Result<()> {
        if !grads.same_shape(params) || !self.m.same_shape(params) {
            return Err(Error::config("Adam: gradient or moment shapes do not match parameters"));
        }
        for (i, g) in grads.tensors().iter().enumerate() {
            if let Some(pos) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::Training {
                    path: format!("{}[{pos}]", tensor_name(i)),
                    reason: "non-finite gradient".into(),
                });
            }
        }
        self.step += 1;
        let c = self.config;
        let bias1 = 1.0 - c.beta1.powi(self.step as i32);
        let bias2 = 1.0 - c.beta2.powi(self.step as i32);
        let mut p_t = params.tensors_mut();
        let mut m_t = self.m.tensors_mut();
        let mut v_t = self.v.tensors_mut();
        let g_t = grads.tensors();
        for k in 0..g_t.len() {
            let flags = mask.map(|m| m.tensors[k].as_slice());
            let (p, m, v, g) = (&mut *p_t[k], &mut *m_t[k], &mut *v_t[k], g_t[k]);
            for e in 0..g.len() {
                if flags.is_some_and(|f| !f[e]) {
                    continue;
                }
                let grad = g[e] + c.weight_decay * p[e];
                m[e] = c.beta1 * m[e] + (1.0 - c.beta1) * grad;
                v[e] = c.beta2 * v[e] + (1.0 - c.beta2) * grad * grad;
                let m_hat = m[e] / bias1;
                let v_hat = v[e] / bias2;
                p[e] -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::mlp::{Activation, Layer};
    use ndarray::{array, Array2};

    fn scalar(theta: f64) -> Mlp {
        Mlp::new(vec![Layer {
            weight: Array2::from_elem((1, 1), theta),
            bias: array![0.0],
            activation: Activation::Identity,
        }])
        .unwrap()
    }

    fn grad_of(g: f64) -> Gradients {
        Gradients { weights: vec![Array2::from_elem((1, 1), g)], biases: vec![array![0.0]] }
    }

    #[test]
    fn defaults_match_reference_values() {
        let c = AdamConfig::default();
        assert_eq!((c.learning_rate, c.beta1, c.beta2, c.epsilon, c.weight_decay), (1e-4, 0.9, 0.999, 1e-8, 0.0));
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = scalar(0.7);
        let mut adam = AdamState::new(AdamConfig::default(), &p);
        adam.step(&mut p, &grad_of(0.0)).unwrap();
        assert_eq!(p.layers()[0].weight[[0, 0]], 0.7);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [3.0, -0.002, 150.0] {
            let mut p = scalar(1.0);
            let mut adam = AdamState::new(AdamConfig::default(), &p);
            adam.step(&mut p, &grad_of(g)).unwrap();
            let delta = p.layers()[0].weight[[0, 0]] - 1.0;
            assert!((delta.abs() - 1e-4).abs() < 1e-9, "g={g} delta={delta}");
            assert_eq!(delta.signum(), -g.signum());
        }
    }

    #[test]
    fn quadratic_matches_reference_adam() {
        // hand-rolled scalar Adam on f(θ)=θ², grad 2θ
        let (mut theta, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        let (lr, b1, b2, eps) = (1e-2, 0.9, 0.999, 1e-8);
        let mut reference = vec![];
        for t in 1..=3 {
            let g = 2.0 * theta;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            theta -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
            reference.push(theta);
        }
        let mut p = scalar(1.0);
        let mut adam = AdamState::new(AdamConfig::default().with_learning_rate(1e-2), &p);
        let mut prev = 1.0;
        for want in reference {
            let th = p.layers()[0].weight[[0, 0]];
            adam.step(&mut p, &grad_of(2.0 * th)).unwrap();
            let now = p.layers()[0].weight[[0, 0]];
            assert!(now < prev);
            assert!((now - want).abs() < 1e-15);
            prev = now;
        }
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = scalar(1.0);
        let mut adam = AdamState::new(AdamConfig::default(), &p);
        let err = adam.step(&mut p, &grad_of(f64::INFINITY)).unwrap_err();
        assert!(err.to_string().contains("layer0.weight[0]"), "{err}");
        assert_eq!(adam.step, 0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = scalar(1.0);
        let mut adam = AdamState::new(AdamConfig::default(), &p);
        let g = Gradients { weights: vec![Array2::zeros((2, 1))], biases: vec![array![0.0, 0.0]] };
        assert!(matches!(adam.step(&mut p, &g), Err(Error::Config(_))));
    }

    #[test]
    fn masked_entries_are_untouched() {
        let mut p = scalar(1.0);
        let mut adam = AdamState::new(AdamConfig::default(), &p);
        let mask = UpdateMask::all(&p, false);
        adam.step_masked(&mut p, &grad_of(5.0), Some(&mask)).unwrap();
        assert_eq!(p.layers()[0].weight[[0, 0]], 1.0);
        assert_eq!(adam.m.weights[0][[0, 0]], 0.0);
    }
}
