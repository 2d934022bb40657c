use rand::Rng;
use rand_distr::StandardNormal;

use super::task::Point;

/// Scales `a` down to norm `max_norm` if it is longer.
pub fn clamp_action(a: Point, max_norm: f64) -> Point {
    let n = (a[0] * a[0] + a[1] * a[1]).sqrt();
    if n > max_norm && n > 0.0 {
        let k = max_norm / n;
        [a[0] * k, a[1] * k]
    } else {
        a
    }
}

/// `s' = s + clamp(a) + η`, `η ~ N(0, σ²I)`.
pub fn transition<R: Rng + ?Sized>(s: Point, a: Point, sigma: f64, max_action: f64, rng: &mut R) -> Point {
    let a = clamp_action(a, max_action);
    if sigma == 0.0 {
        return [s[0] + a[0], s[1] + a[1]];
    }
    let (n0, n1): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
    [s[0] + a[0] + sigma * n0, s[1] + a[1] + sigma * n1]
}

/// Default coherence threshold, relative to the peak transition density:
/// the density 3σ from the mean of an isotropic 2-D Gaussian.
pub const DEFAULT_COHERENCE_EPSILON: f64 = 0.011_108_996_538_242_306; // exp(-4.5)

/// Radius at which an isotropic 2-D Gaussian's density falls to `epsilon`
/// times its peak: `σ·√(−2 ln ε)`.
pub fn coherence_radius(epsilon: f64, sigma: f64) -> f64 {
    sigma * (-2.0 * epsilon.ln()).sqrt()
}

/// True iff every consecutive pair is reachable: some `‖a‖ ≤ a_max` puts the
/// transition density (relative to its peak) above `epsilon`. Equivalently
/// `‖s_{i+1} − s_i‖ ≤ a_max + r(ε, σ)`; with `σ = 0` exact reachability.
pub fn temporally_coherent(states: &[Point], epsilon: f64, sigma: f64, max_action: f64) -> bool {
    let bound = if sigma == 0.0 { max_action } else { max_action + coherence_radius(epsilon, sigma) };
    states.windows(2).all(|w| super::task::dist(w[0], w[1]) <= bound)
}
