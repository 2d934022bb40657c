//! Checks on the sample-complexity arguments against pseudo-rehearsal: how
//! many i.i.d. state draws it takes to cover every timestep, and how often an
//! autoregressive rollout drifts off course.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pathworld::{dist, point_segment_distance, Point};
use crate::rng::SeedTree;

/// Smallest trial count accepted by the coverage simulation.
pub const MIN_COVERAGE_TRIALS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    /// Trajectory length.
    pub n: usize,
    /// Hits required per timestep.
    pub m: usize,
    pub trials: usize,
    pub mean_draws: f64,
    /// Standard error of `mean_draws`.
    pub std_error: f64,
    /// Exact expectation when known (`n·H_n` for `m = 1`, `m` for `n = 1`).
    pub exact: Option<f64>,
}

impl CoverageReport {
    pub fn relative_error(&self) -> Option<f64> {
        self.exact.map(|e| (self.mean_draws - e).abs() / e)
    }
}

/// `H_n = 1 + 1/2 + ... + 1/n`.
pub fn harmonic(n: usize) -> f64 {
    (1..=n).rev().map(|k| 1.0 / k as f64).sum()
}

/// Mean number of uniform draws over `n` timesteps until each has been drawn
/// at least `m` times, estimated from `trials` independent trials. Trial `i`
/// uses substream `i` of `seeds`, so the estimate does not depend on how the
/// trials are scheduled across threads.
pub fn expected_coverage_draws(n: usize, m: usize, trials: usize, seeds: &SeedTree) -> Result<CoverageReport> {
    if n == 0 || m == 0 {
        return Err(Error::config("coverage needs n >= 1 and m >= 1"));
    }
    if trials < MIN_COVERAGE_TRIALS {
        return Err(Error::config(format!("coverage needs at least {MIN_COVERAGE_TRIALS} trials, got {trials}")));
    }
    let draws: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| coverage_trial(n, m, &mut seeds.index(i as u64).rng()) as f64)
        .collect();
    let mean = draws.iter().sum::<f64>() / trials as f64;
    let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
    let exact = if n == 1 {
        Some(m as f64)
    } else if m == 1 {
        Some(n as f64 * harmonic(n))
    } else {
        None
    };
    Ok(CoverageReport { n, m, trials, mean_draws: mean, std_error: (var / trials as f64).sqrt(), exact })
}

fn coverage_trial<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> usize {
    let mut hits = vec![0usize; n];
    let mut short = n;
    let mut draws = 0;
    while short > 0 {
        let k = rng.random_range(0..n);
        hits[k] += 1;
        if hits[k] == m {
            short -= 1;
        }
        draws += 1;
    }
    draws
}

/// Probability that at least one of `n` steps goes wrong when each does so
/// independently with probability `p_step`.
pub fn offcourse_probability(p_step: f64, n: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_step) {
        return Err(Error::config(format!("p_step must lie in [0, 1], got {p_step}")));
    }
    Ok(1.0 - (1.0 - p_step).powi(n as i32))
}

/// Distance from `p` to the polyline through `path`.
pub fn distance_to_path(p: Point, path: &[Point]) -> f64 {
    match path {
        [] => f64::INFINITY,
        [only] => dist(p, *only),
        _ => path.windows(2).map(|w| point_segment_distance(p, (w[0], w[1]))).fold(f64::INFINITY, f64::min),
    }
}

/// Whether any state strays farther than `corridor` from `reference`.
pub fn off_course(states: &[Point], reference: &[Point], corridor: f64) -> bool {
    states.iter().any(|&s| distance_to_path(s, reference) > corridor)
}

/// Counts per 1-based timestep in `1..=len`. Timesteps outside that range are
/// ignored.
pub fn timestep_histogram(timesteps: impl IntoIterator<Item = usize>, len: usize) -> Vec<usize> {
    let mut counts = vec![0; len];
    for j in timesteps {
        if (1..=len).contains(&j) {
            counts[j - 1] += 1;
        }
    }
    counts
}

pub fn coverage_csv(reports: &[CoverageReport]) -> String {
    let mut out = String::from("n,m,trials,mean_draws,std_error,exact,relative_error\n");
    for r in reports {
        let opt = |v: Option<f64>| v.map(|v| format!("{v}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.n,
            r.m,
            r.trials,
            r.mean_draws,
            r.std_error,
            opt(r.exact),
            opt(r.relative_error())
        );
    }
    out
}

/// Off-course probability for each step count, as CSV for plotting.
pub fn offcourse_csv(p_step: f64, lengths: &[usize]) -> Result<String> {
    let mut out = String::from("p_step,n,offcourse\n");
    for &n in lengths {
        let _ = writeln!(out, "{p_step},{n},{}", offcourse_probability(p_step, n)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn harmonic_values() {
        assert_eq!(harmonic(1), 1.0);
        assert!((4.0 * harmonic(4) - 25.0 / 3.0).abs() < 1e-12);
        assert!((harmonic(50) - 4.499205338329425).abs() < 1e-12);
    }

    #[test]
    fn single_timestep_needs_exactly_m_draws() {
        let r = expected_coverage_draws(1, 7, 1000, &SeedTree::new(0)).unwrap();
        assert_eq!(r.mean_draws, 7.0);
        assert_eq!(r.std_error, 0.0);
    }

    #[test]
    fn coupon_collector_means() {
        for n in [4, 16, 50] {
            let r = expected_coverage_draws(n, 1, 20_000, &SeedTree::new(n as u64)).unwrap();
            let exact = r.exact.unwrap();
            assert!((r.mean_draws - exact).abs() < 3.0 * r.std_error, "{r:?}");
            assert!(r.relative_error().unwrap() < 0.02);
        }
    }

    #[test]
    fn more_hits_need_more_draws() {
        let one = expected_coverage_draws(10, 1, 2000, &SeedTree::new(1)).unwrap();
        let three = expected_coverage_draws(10, 3, 2000, &SeedTree::new(1)).unwrap();
        assert!(three.mean_draws > one.mean_draws);
        assert!(three.mean_draws >= 30.0);
        assert_eq!(three.exact, None);
    }

    #[test]
    fn coverage_rejects_bad_arguments() {
        assert!(expected_coverage_draws(0, 1, 1000, &SeedTree::new(0)).is_err());
        assert!(expected_coverage_draws(3, 0, 1000, &SeedTree::new(0)).is_err());
        assert!(expected_coverage_draws(3, 1, 999, &SeedTree::new(0)).is_err());
    }

    #[test]
    fn offcourse_values() {
        assert_eq!(format!("{:.2}", offcourse_probability(0.01, 200).unwrap()), "0.87");
        assert_eq!(offcourse_probability(0.0, 500).unwrap(), 0.0);
        assert!((offcourse_probability(0.3, 1).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(offcourse_probability(0.3, 0).unwrap(), 0.0);
        assert!(offcourse_probability(1.1, 3).is_err());
        assert!(offcourse_probability(f64::NAN, 3).is_err());
    }

    #[test]
    fn corridor_distance() {
        let path = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]];
        assert_eq!(distance_to_path([0.5, 0.2], &path), 0.2);
        assert_eq!(distance_to_path([1.5, 0.5], &path), 0.5);
        assert_eq!(distance_to_path([3.0, 4.0], &[[0.0, 0.0]]), 5.0);
        assert!(!off_course(&[[0.2, 0.01], [1.01, 0.7]], &path, 0.05));
        assert!(off_course(&[[0.2, 0.01], [0.5, 0.5]], &path, 0.05));
    }

    #[test]
    fn histogram_counts() {
        assert_eq!(timestep_histogram([], 3), vec![0, 0, 0]);
        assert_eq!(timestep_histogram([1, 3, 3, 0, 4], 3), vec![1, 0, 2]);
    }

    #[test]
    fn iid_timesteps_are_rarely_uniform() {
        // 1000 uniform draws over 100 bins are essentially never exactly 10 each.
        let mut rng = SeedTree::new(3).rng();
        let uneven = (0..200)
            .filter(|_| {
                let h = timestep_histogram((0..1000).map(|_| rng.random_range(1..=100)), 100);
                h.iter().min() < h.iter().max()
            })
            .count();
        assert_eq!(uneven, 200);
    }

    #[test]
    fn csv_layout() {
        let r = expected_coverage_draws(1, 2, 1000, &SeedTree::new(0)).unwrap();
        let csv = coverage_csv(&[r]);
        assert_eq!(csv.lines().nth(1).unwrap(), "1,2,1000,2,0,2,0");
        assert_eq!(offcourse_csv(0.5, &[1, 2]).unwrap(), "p_step,n,offcourse\n0.5,1,0.5\n0.5,2,0.75\n");
    }

    proptest! {
        #[test]
        fn offcourse_is_monotone(p in 0.0f64..1.0, dp in 0.0f64..0.5, n in 0usize..400, dn in 0usize..50) {
            let base = offcourse_probability(p, n).unwrap();
            prop_assert!(offcourse_probability((p + dp).min(1.0), n).unwrap() >= base);
            prop_assert!(offcourse_probability(p, n + dn).unwrap() >= base);
            prop_assert!((0.0..=1.0).contains(&base));
        }
    }
}
