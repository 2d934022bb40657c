//! Online EWC with a single running-average Fisher penalty.

use ndarray::s;
use rand::Rng;

use crate::nn::{bc_train_epoch, AdamState, BcData, Gradients, Mlp, Regularizer, TrainOptions};
use crate::error::Result;

const FISHER_CHUNK: usize = 1024;

/// Mean over `data` of the squared per-sample BC-loss gradient.
pub fn estimate_fisher(policy: &Mlp, data: &BcData) -> Gradients {
    let mut acc = Gradients::zeros_like(policy);
    let n = data.len();
    if n == 0 {
        return acc;
    }
    let mut start = 0;
    while start < n {
        let end = (start + FISHER_CHUNK).min(n);
        let x = data.inputs.slice(s![start..end, ..]);
        let y = data.targets.slice(s![start..end, ..]);
        let trace = policy.forward_train(x);
        // Per-sample loss ‖f(x) − y‖², so the per-sample output gradient is 2·diff.
        let d_out = (trace.output() - &y) * 2.0;
        let sq = policy.squared_sample_gradients(&trace, d_out.view());
        acc.add_scaled(&sq, (end - start) as f64);
        start = end;
    }
    acc.scale(1.0 / n as f64);
    acc
}

/// Diagonal Fisher estimate and the parameters it anchors to.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherInfo {
    pub diag: Gradients,
    pub anchor: Mlp,
    /// Number of buckets averaged into `diag`.
    pub buckets: usize,
}

impl FisherInfo {
    /// Folds in the Fisher from a newly finished bucket (plain running mean)
    /// and moves the anchor to the current parameters.
    pub fn absorb(current: Option<FisherInfo>, diag: Gradients, anchor: Mlp) -> FisherInfo {
        match current {
            None => FisherInfo { diag, anchor, buckets: 1 },
            Some(mut f) => {
                let k = f.buckets as f64;
                f.diag.scale(k / (k + 1.0));
                f.diag.add_scaled(&diag, 1.0 / (k + 1.0));
                FisherInfo { diag: f.diag, anchor, buckets: f.buckets + 1 }
            }
        }
    }
}

/// `(λ/2)·Σ F_k (θ_k − θ*_k)²`.
#[derive(Debug, Clone, Copy)]
pub struct EwcPenalty<'a> {
    pub fisher: &'a FisherInfo,
    pub lambda: f64,
}

fn zip_params<'a>(
    fisher: &'a FisherInfo,
    policy: &'a Mlp,
) -> impl Iterator<Item = (ndarray::ArrayViewD<'a, f64>, ndarray::ArrayViewD<'a, f64>, ndarray::ArrayViewD<'a, f64>)> {
    let layers = policy.layers().iter().zip(fisher.anchor.layers());
    layers
        .zip(fisher.diag.weights.iter().zip(&fisher.diag.biases))
        .flat_map(|((l, a), (fw, fb))| {
            [
                (fw.view().into_dyn(), l.weight.view().into_dyn(), a.weight.view().into_dyn()),
                (fb.view().into_dyn(), l.bias.view().into_dyn(), a.bias.view().into_dyn()),
            ]
        })
}

impl Regularizer for EwcPenalty<'_> {
    fn penalty(&self, policy: &Mlp) -> f64 {
        let sum: f64 = zip_params(self.fisher, policy)
            .map(|(f, p, a)| {
                f.iter().zip(p.iter()).zip(a.iter()).map(|((f, p), a)| f * (p - a) * (p - a)).sum::<f64>()
            })
            .sum();
        0.5 * self.lambda * sum
    }

    fn add_gradient(&self, policy: &Mlp, grads: &mut Gradients) {
        let lambda = self.lambda;
        // Entries with zero weight are skipped so F = 0 leaves gradients untouched bit for bit.
        let each = |g: &mut f64, f: f64, p: f64, a: f64| {
            let w = lambda * f;
            if w != 0.0 {
                *g += w * (p - a);
            }
        };
        for (k, (l, a)) in policy.layers().iter().zip(self.fisher.anchor.layers()).enumerate() {
            let fw = &self.fisher.diag.weights[k];
            ndarray::Zip::from(&mut grads.weights[k])
                .and(fw)
                .and(&l.weight)
                .and(&a.weight)
                .for_each(|g, &f, &p, &a| each(g, f, p, a));
            let fb = &self.fisher.diag.biases[k];
            ndarray::Zip::from(&mut grads.biases[k])
                .and(fb)
                .and(&l.bias)
                .and(&a.bias)
                .for_each(|g, &f, &p, &a| each(g, f, p, a));
        }
    }
}

/// BC for `epochs` passes with an optional EWC penalty. Returns the last epoch's mean loss.
#[allow(clippy::too_many_arguments)]
pub fn ewc_train<R: Rng + ?Sized>(
    policy: &mut Mlp,
    adam: &mut AdamState,
    fisher: Option<&FisherInfo>,
    lambda: f64,
    data: &BcData,
    epochs: usize,
    batch_size: usize,
    rng: &mut R,
) -> Result<f64> {
    let penalty = fisher.map(|fisher| EwcPenalty { fisher, lambda });
    let mut last = 0.0;
    for _ in 0..epochs {
        let mut opts = TrainOptions::new(batch_size);
        opts.regularizer = penalty.as_ref().map(|p| p as &dyn Regularizer);
        last = bc_train_epoch(policy, adam, data, opts, rng)?.mean_loss;
    }
    Ok(last)
}
