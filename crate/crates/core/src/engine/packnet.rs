//! PackNet: per-task weight ownership by iterative magnitude pruning.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{bc_train_epoch, AdamState, BcData, Mlp, TrainOptions, UpdateMask};

/// Owner of every weight entry: `0` means free, `k` means assigned to task
/// `k` (1-based). Biases are shared and frozen after the first task.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ParamMasks {
    pub owners: Vec<Vec<u32>>,
    pub bias_lens: Vec<usize>,
    pub biases_frozen: bool,
    pub tasks_done: u32,
}

impl ParamMasks {
    pub fn new(policy: &Mlp) -> Self {
        Self {
            owners: policy.layers().iter().map(|l| vec![0; l.weight.len()]).collect(),
            bias_lens: policy.layers().iter().map(|l| l.bias.len()).collect(),
            biases_frozen: false,
            tasks_done: 0,
        }
    }

    pub fn total_weights(&self) -> usize {
        self.owners.iter().map(Vec::len).sum()
    }

    pub fn free_count(&self) -> usize {
        self.owners.iter().flatten().filter(|&&o| o == 0).count()
    }

    pub fn free_fraction(&self) -> f64 {
        self.free_count() as f64 / self.total_weights().max(1) as f64
    }

    pub fn owned_by(&self, task: u32) -> usize {
        self.owners.iter().flatten().filter(|&&o| o == task).count()
    }

    fn mask_where(&self, trainable: impl Fn(u32) -> bool) -> UpdateMask {
        let mut tensors = Vec::with_capacity(self.owners.len() * 2);
        for (owners, &bias_len) in self.owners.iter().zip(&self.bias_lens) {
            tensors.push(owners.iter().map(|&o| trainable(o)).collect());
            tensors.push(vec![!self.biases_frozen; bias_len]);
        }
        UpdateMask { tensors }
    }

    /// Free weights (and biases, until frozen) are trainable.
    pub fn train_mask(&self) -> UpdateMask {
        self.mask_where(|o| o == 0)
    }

    /// Only the weights assigned to `task` are trainable.
    pub fn retrain_mask(&self, task: u32) -> UpdateMask {
        self.mask_where(|o| o == task)
    }

    /// Network restricted to the weights of tasks `1..=upto`.
    pub fn restrict(&self, policy: &Mlp, upto: u32) -> Mlp {
        let mut net = policy.clone();
        for (layer, owners) in net.layers_mut().iter_mut().zip(&self.owners) {
            for (w, &o) in layer.weight.iter_mut().zip(owners) {
                if o == 0 || o > upto {
                    *w = 0.0;
                }
            }
        }
        net
    }

    /// Network used to evaluate 1-based task `task`. Before any task is
    /// finished the raw network is used.
    pub fn eval_network(&self, policy: &Mlp, task: u32) -> Mlp {
        if self.tasks_done == 0 {
            return policy.clone();
        }
        self.restrict(policy, task.min(self.tasks_done))
    }

    /// Keeps the largest-magnitude free weights for `task` and zeroes the rest,
    /// leaving `round(total · prune^k)` weights free after `k` tasks.
    pub fn prune_and_assign(&mut self, policy: &mut Mlp, task: u32, prune_fraction: f64) -> Result<usize> {
        let k = self.tasks_done + 1;
        let target_free = (self.total_weights() as f64 * prune_fraction.powi(k as i32)).round() as usize;
        let mut free: Vec<(usize, usize, f64)> = Vec::new();
        for (l, (layer, owners)) in policy.layers().iter().zip(&self.owners).enumerate() {
            for (i, (&w, &o)) in layer.weight.iter().zip(owners).enumerate() {
                if o == 0 {
                    free.push((l, i, w.abs()));
                }
            }
        }
        let keep = free.len().saturating_sub(target_free);
        if keep == 0 {
            return Err(Error::CapacityExhausted(format!(
                "task {task}: no free weights left to assign ({} free)",
                free.len()
            )));
        }
        // Descending magnitude; ties broken by position for determinism.
        free.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
        for &(l, i, _) in &free[..keep] {
            self.owners[l][i] = task;
        }
        let layers = policy.layers_mut();
        for &(l, i, _) in &free[keep..] {
            layers[l].weight.as_slice_mut().expect("standard layout")[i] = 0.0;
        }
        Ok(keep)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PackNetSchedule {
    pub epochs: usize,
    pub retrain_epochs: usize,
    pub batch_size: usize,
    pub prune_fraction: f64,
}

/// Train free weights, prune and assign to `task`, retrain the assigned
/// weights, then freeze them (and the biases). Returns the last retrain loss.
pub fn packnet_step<R: Rng + ?Sized>(
    policy: &mut Mlp,
    adam: &mut AdamState,
    masks: &mut ParamMasks,
    task: u32,
    data: &BcData,
    schedule: PackNetSchedule,
    rng: &mut R,
) -> Result<f64> {
    if masks.free_count() == 0 {
        return Err(Error::CapacityExhausted(format!("task {task}: every weight is already assigned")));
    }
    let mask = masks.train_mask();
    let mut last = 0.0;
    for _ in 0..schedule.epochs {
        let opts = TrainOptions { mask: Some(&mask), ..TrainOptions::new(schedule.batch_size) };
        last = bc_train_epoch(policy, adam, data, opts, rng)?.mean_loss;
    }
    masks.prune_and_assign(policy, task, schedule.prune_fraction)?;
    let mask = masks.retrain_mask(task);
    for _ in 0..schedule.retrain_epochs {
        let opts = TrainOptions { mask: Some(&mask), ..TrainOptions::new(schedule.batch_size) };
        last = bc_train_epoch(policy, adam, data, opts, rng)?.mean_loss;
    }
    masks.biases_frozen = true;
    masks.tasks_done += 1;
    Ok(last)
}
