//! Continual-learning metrics over a task × evaluation-point success matrix.

mod stats;

pub use stats::{
    ci90, incomplete_beta, ln_gamma, student_t_cdf, student_t_quantile, welch_test, Interval, WelchResult,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `rates[i][t]` is the success rate of task `i` evaluated at point `t`,
/// where `t = 0` precedes any training and `t = k` follows bucket `k`.
/// `trained_at[i]` is the column right after task `i`'s data was last seen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessMatrix {
    pub rates: Vec<Vec<f64>>,
    pub trained_at: Vec<usize>,
}

impl SuccessMatrix {
    pub fn new(rates: Vec<Vec<f64>>, trained_at: Vec<usize>) -> Result<Self> {
        let m = Self { rates, trained_at };
        m.validate()?;
        Ok(m)
    }

    /// Sequential stream: task `i` (0-based) finishes at column `i + 1`.
    pub fn sequential(rates: Vec<Vec<f64>>) -> Result<Self> {
        let trained_at = (1..=rates.len()).collect();
        Self::new(rates, trained_at)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rates.is_empty() {
            return Err(Error::Stats("success matrix has no tasks".into()));
        }
        let cols = self.rates[0].len();
        if cols < 2 {
            return Err(Error::Stats("success matrix needs at least two evaluation points".into()));
        }
        if self.trained_at.len() != self.rates.len() {
            return Err(Error::Stats("trained_at length differs from task count".into()));
        }
        for (i, row) in self.rates.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::Stats(format!("task {i} has {} columns, expected {cols}", row.len())));
            }
            if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::Stats(format!("task {i} has success rate {v} outside [0, 1]")));
            }
            let at = self.trained_at[i];
            if at == 0 || at >= cols {
                return Err(Error::Stats(format!("task {i} trained_at column {at} out of range")));
            }
        }
        Ok(())
    }

    pub fn tasks(&self) -> usize {
        self.rates.len()
    }

    pub fn columns(&self) -> usize {
        self.rates[0].len()
    }

    pub fn get(&self, task: usize, column: usize) -> f64 {
        self.rates[task][column]
    }

    pub fn final_column(&self) -> Vec<f64> {
        self.rates.iter().map(|r| *r.last().expect("validated")).collect()
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// `(1/N)·Σ s_i(N)`.
pub fn avg_success(s: &SuccessMatrix) -> f64 {
    mean(&s.final_column())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerTask {
    /// `None` where the metric is undefined.
    pub per_task: Vec<Option<f64>>,
    pub mean: Option<f64>,
}

impl PerTask {
    fn from_values(per_task: Vec<Option<f64>>) -> Self {
        let defined: Vec<f64> = per_task.iter().flatten().copied().collect();
        let mean = (!defined.is_empty()).then(|| mean(&defined));
        Self { per_task, mean }
    }
}

/// `FT_i = (D_i − D_i^ref)/(1 − D_i^ref)` with `D_i = (s_i(i) + s_i(i−1))/2`
/// and `D_i^ref = s_i^ref/2`; undefined when `D_i^ref = 1`.
pub fn forward_transfer(s: &SuccessMatrix, reference: &[f64]) -> Result<PerTask> {
    if reference.len() != s.tasks() {
        return Err(Error::Stats(format!(
            "reference has {} entries for {} tasks",
            reference.len(),
            s.tasks()
        )));
    }
    let per_task = (0..s.tasks())
        .map(|i| {
            let at = s.trained_at[i];
            let d = (s.get(i, at) + s.get(i, at - 1)) / 2.0;
            let d_ref = reference[i] / 2.0;
            (d_ref < 1.0).then(|| (d - d_ref) / (1.0 - d_ref))
        })
        .collect();
    Ok(PerTask::from_values(per_task))
}

/// `F_i = s_i(i) − s_i(N)`.
pub fn forgetting(s: &SuccessMatrix) -> PerTask {
    let last = s.columns() - 1;
    let per_task = (0..s.tasks()).map(|i| Some(s.get(i, s.trained_at[i]) - s.get(i, last))).collect();
    PerTask::from_values(per_task)
}

/// Generation quality of the generator for one past task after one bucket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityPoint {
    pub bucket: usize,
    pub task: usize,
    pub value: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn avg_success_examples() {
        let ones = SuccessMatrix::sequential(vec![vec![0.0, 1.0, 1.0]; 2]).unwrap();
        assert_eq!(avg_success(&ones), 1.0);
        let half = SuccessMatrix::sequential(vec![vec![0.0, 1.0, 1.0], vec![0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(avg_success(&half), 0.5);
    }

    #[test]
    fn forward_transfer_examples() {
        let m = |cur: f64, prev: f64| SuccessMatrix::sequential(vec![vec![prev, cur]]).unwrap();
        assert!(close(forward_transfer(&m(1.0, 0.0), &[1.0]).unwrap().mean.unwrap(), 0.0, 1e-12));
        assert!(close(forward_transfer(&m(1.0, 1.0), &[1.0]).unwrap().mean.unwrap(), 1.0, 1e-12));
        let ft = forward_transfer(&m(0.8, 0.4), &[0.9]).unwrap().mean.unwrap();
        assert!(close(ft, 0.15 / 0.55, 1e-12));
    }

    #[test]
    fn forward_transfer_undefined_when_reference_saturates() {
        let m = SuccessMatrix::sequential(vec![vec![0.0, 1.0]]).unwrap();
        let ft = forward_transfer(&m, &[2.0]).unwrap();
        assert_eq!(ft.per_task, vec![None]);
        assert_eq!(ft.mean, None);
        assert!(forward_transfer(&m, &[]).is_err());
    }

    #[test]
    fn forgetting_examples() {
        let f = |at_i: f64, last: f64| {
            forgetting(&SuccessMatrix::sequential(vec![vec![0.0, at_i, 0.5, last], vec![0.0; 4], vec![0.0; 4]]).unwrap())
                .per_task[0]
                .unwrap()
        };
        assert_eq!(f(0.7, 0.7), 0.0);
        assert_eq!(f(1.0, 0.0), 1.0);
        assert!(close(f(0.6, 0.7), -0.1, 1e-12));
    }

    #[test]
    fn matrix_validation() {
        assert!(SuccessMatrix::sequential(vec![vec![0.0, 1.5]]).is_err());
        assert!(SuccessMatrix::sequential(vec![vec![0.0]]).is_err());
        assert!(SuccessMatrix::new(vec![vec![0.0, 1.0]], vec![2]).is_err());
        assert!(SuccessMatrix::sequential(vec![vec![0.0, 1.0], vec![0.5]]).is_err());
    }

    #[test]
    fn t_quantiles_match_reference() {
        assert!(close(student_t_quantile(0.95, 4.0), 2.131846786326649, 1e-9));
        assert!(close(student_t_quantile(0.95, 1.0), 6.313751514800932, 1e-9));
        assert!(close(student_t_quantile(0.95, 7.3), 1.8829300179371542, 1e-9));
        assert!(close(student_t_cdf(-1.7, 2.5), 0.10280610857994191, 1e-10));
        assert!(close(student_t_cdf(0.0, 3.0), 0.5, 1e-15));
    }

    #[test]
    fn ci90_examples() {
        let c = ci90(&[0.3; 5]).unwrap();
        assert_eq!((c.mean, c.half_width), (0.3, 0.0));
        let c = ci90(&[0.0, 1.0]).unwrap();
        assert!(close(c.mean, 0.5, 1e-15));
        let expected = 6.313751514800932 * (0.5f64).sqrt() / 2f64.sqrt();
        assert!(close(c.half_width, expected, 1e-9));
        assert!(ci90(&[1.0]).is_err());
    }

    #[test]
    fn welch_matches_reference() {
        let w = welch_test(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!(close(w.t, -3.6742346141747673, 1e-12));
        assert!(close(w.dof, 4.0, 1e-12));
        assert!(close(w.p, 0.021311641128756727, 1e-6));
        let w = welch_test(&[0.2, 0.5, 0.9, 0.4], &[0.1, 0.15, 0.3, 0.35, 0.05]).unwrap();
        assert!(close(w.t, 1.959958938508553, 1e-12));
        assert!(close(w.dof, 3.9289659090132925, 1e-9));
        assert!(close(w.p, 0.12284077008243718, 1e-6));
    }

    #[test]
    fn welch_identical_and_degenerate() {
        let a = [0.1, 0.4, 0.2];
        let w = welch_test(&a, &a).unwrap();
        assert_eq!((w.t, w.p), (0.0, 1.0));
        let w = welch_test(&[0.5, 0.5], &[0.5, 0.5]).unwrap();
        assert!(w.degenerate && w.p == 1.0);
        let w = welch_test(&[0.5, 0.5], &[0.2, 0.2]).unwrap();
        assert!(w.degenerate && w.p == 0.0);
        assert!(welch_test(&[1.0], &[1.0, 2.0]).is_err());
    }

    fn matrix_strategy() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
        (2usize..6).prop_flat_map(|n| {
            (
                prop::collection::vec(prop::collection::vec(0.0f64..=1.0, n + 1), n),
                prop::collection::vec(0.0f64..1.9, n),
            )
        })
    }

    proptest! {
        #[test]
        fn welch_swap_negates_t(a in prop::collection::vec(0.0f64..1.0, 2..8), b in prop::collection::vec(0.0f64..1.0, 2..8)) {
            let (x, y) = (welch_test(&a, &b).unwrap(), welch_test(&b, &a).unwrap());
            prop_assert!(x.t == -y.t || (x.t.is_nan() && y.t.is_nan()));
            prop_assert!((x.p - y.p).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&x.p));
        }

        #[test]
        fn ci_shrinks_with_duplication(v in prop::collection::vec(0.0f64..1.0, 3..8)) {
            let once = ci90(&v).unwrap();
            let doubled: Vec<f64> = v.iter().chain(&v).copied().collect();
            let twice = ci90(&doubled).unwrap();
            let n = v.len() as f64;
            // sd shrinks by √((2n−2)/(2n−1)) relative to √((n−1)/n); the critical value also drops.
            let ratio_sd = ((n - 1.0) * 2.0 * n / (n * (2.0 * n - 1.0))).sqrt();
            let expected = once.half_width / 2f64.sqrt() * ratio_sd
                * student_t_quantile(0.95, 2.0 * n - 1.0) / student_t_quantile(0.95, n - 1.0);
            prop_assert!((twice.half_width - expected).abs() < 1e-9);
            prop_assert!(twice.half_width <= once.half_width + 1e-15);
        }

        #[test]
        fn metrics_permutation_equivariant((rates, reference) in matrix_strategy(), rot in 0usize..5) {
            let n = rates.len();
            let s = SuccessMatrix::sequential(rates.clone()).unwrap();
            // Relabel tasks by rotating rows while keeping each task's training column.
            let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
            let rates_p: Vec<Vec<f64>> = perm.iter().map(|&i| rates[i].clone()).collect();
            let trained_p: Vec<usize> = perm.iter().map(|&i| s.trained_at[i]).collect();
            let ref_p: Vec<f64> = perm.iter().map(|&i| reference[i]).collect();
            let p = SuccessMatrix::new(rates_p, trained_p).unwrap();
            prop_assert!((avg_success(&s) - avg_success(&p)).abs() < 1e-12);
            let (f, fp) = (forgetting(&s), forgetting(&p));
            prop_assert!((f.mean.unwrap() - fp.mean.unwrap()).abs() < 1e-12);
            for (k, &i) in perm.iter().enumerate() {
                prop_assert_eq!(fp.per_task[k], f.per_task[i]);
            }
            let (t, tp) = (forward_transfer(&s, &reference).unwrap(), forward_transfer(&p, &ref_p).unwrap());
            prop_assert!((t.mean.unwrap() - tp.mean.unwrap()).abs() < 1e-12);
        }
    }
}
