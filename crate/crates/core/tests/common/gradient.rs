//! Central-difference check of the network loss gradient.

use ndarray::{Array1, Array2};
use phenoflow_core::neural::mlp::{init_params, loss_and_gradient, n_params};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;

pub fn relative_error(g: f64, fd: f64) -> f64 {
    let scale = g.abs().max(fd.abs());
    if scale == 0.0 {
        0.0
    } else {
        (g - fd).abs() / scale
    }
}

/// Largest relative error between the analytic gradient and central
/// differences over every parameter.
pub fn check(sizes: &[usize], l2: f64, seed: u64) -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 12;
    let x = Array2::from_shape_fn((n, sizes[0]), |_| rng.random_range(-1.5..1.5));
    let y = Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0));
    let mut params = init_params(sizes, seed, 0.3);
    // nonzero hidden biases so no unit sits exactly on the ReLU kink
    for p in params.iter_mut().filter(|p| **p == 0.0) {
        *p = rng.random_range(-0.1..0.1);
    }
    let mut grad = vec![0.0; n_params(sizes)];
    loss_and_gradient(sizes, &params, x.view(), y.view(), l2, &mut grad);
    let mut scratch = vec![0.0; grad.len()];
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        let orig = params[i];
        params[i] = orig + STEP;
        let up = loss_and_gradient(sizes, &params, x.view(), y.view(), l2, &mut scratch);
        params[i] = orig - STEP;
        let down = loss_and_gradient(sizes, &params, x.view(), y.view(), l2, &mut scratch);
        params[i] = orig;
        worst = worst.max(relative_error(grad[i], (up - down) / (2.0 * STEP)));
    }
    (worst, params.len())
}
