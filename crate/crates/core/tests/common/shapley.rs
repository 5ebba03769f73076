//! Brute-force Shapley values straight from the definition.

use std::collections::HashMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One hidden tanh layer with random weights.
pub fn random_net(m: usize, hidden: usize, seed: u64) -> impl Fn(&[f64]) -> f64 + Sync {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w1: Vec<Vec<f64>> = (0..hidden)
        .map(|_| (0..m).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let b1: Vec<f64> = (0..hidden).map(|_| rng.random_range(-0.5..0.5)).collect();
    let w2: Vec<f64> = (0..hidden).map(|_| rng.random_range(-1.0..1.0)).collect();
    move |x: &[f64]| {
        w1.iter()
            .zip(&b1)
            .zip(&w2)
            .map(|((row, b), v)| {
                v * (row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + b).tanh()
            })
            .sum()
    }
}

pub fn random_rows(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, m), |_| rng.random_range(-2.0..2.0))
}

/// `v(S)`: mean model output with features in `S` taken from `x` and the
/// rest from each background row.
pub fn coalition_value(f: &dyn Fn(&[f64]) -> f64, x: &[f64], bg: &Array2<f64>, mask: u64) -> f64 {
    let mut z = vec![0.0; x.len()];
    let mut total = 0.0;
    for row in bg.rows() {
        for j in 0..x.len() {
            z[j] = if mask >> j & 1 == 1 { x[j] } else { row[j] };
        }
        total += f(&z);
    }
    total / bg.nrows() as f64
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Shapley values from the subset formula over all `2^M` coalitions.
pub fn subset_shapley(f: &dyn Fn(&[f64]) -> f64, x: &[f64], bg: &Array2<f64>) -> Vec<f64> {
    let m = x.len();
    let v: Vec<f64> = (0..1u64 << m)
        .map(|mask| coalition_value(f, x, bg, mask))
        .collect();
    let mut phi = vec![0.0; m];
    for (i, p) in phi.iter_mut().enumerate() {
        for mask in 0..1u64 << m {
            if mask >> i & 1 == 1 {
                continue;
            }
            let s = mask.count_ones() as usize;
            let weight = factorial(s) * factorial(m - s - 1) / factorial(m);
            *p += weight * (v[(mask | 1 << i) as usize] - v[mask as usize]);
        }
    }
    phi
}

pub fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (0..p.len().saturating_sub(1))
        .rev()
        .find(|&i| p[i] < p[i + 1])
    else {
        return false;
    };
    let j = (i + 1..p.len()).rev().find(|&j| p[j] > p[i]).unwrap();
    p.swap(i, j);
    p[i + 1..].reverse();
    true
}

/// Shapley values as the average marginal contribution over every ordering.
pub fn permutation_shapley(f: &dyn Fn(&[f64]) -> f64, x: &[f64], bg: &Array2<f64>) -> Vec<f64> {
    let m = x.len();
    let mut cache: HashMap<u64, f64> = HashMap::new();
    let mut v = |mask: u64| {
        *cache
            .entry(mask)
            .or_insert_with(|| coalition_value(f, x, bg, mask))
    };
    let mut phi = vec![0.0; m];
    let mut order: Vec<usize> = (0..m).collect();
    let mut count = 0.0;
    loop {
        let mut mask = 0u64;
        for &i in &order {
            let before = v(mask);
            mask |= 1 << i;
            phi[i] += v(mask) - before;
        }
        count += 1.0;
        if !next_permutation(&mut order) {
            break;
        }
    }
    phi.iter().map(|p| p / count).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
