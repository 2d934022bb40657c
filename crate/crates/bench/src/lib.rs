//! Fixtures shared by the benchmarks.

use ndarray::Array2;
use tdgr::nn::Mlp;
use tdgr::rng::SeedTree;

/// A learner-sized network and a batch of inputs for it.
pub fn mlp_fixture(hidden: usize, batch: usize) -> (Mlp, Array2<f64>) {
    let mut rng = SeedTree::new(0).rng();
    let net = Mlp::init(&[7, hidden, hidden, hidden, 2], &mut rng).expect("valid sizes");
    let x = Array2::from_shape_fn((batch, 7), |(i, j)| ((i * 7 + j) as f64).sin());
    (net, x)
}
