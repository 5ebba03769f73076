//! Kernel SHAP with marginal (background-average) imputation.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView2};
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ExplainError;
use crate::predictor::Predictor;

/// Coalitions evaluated per model call when imputing.
const EVAL_CHUNK: usize = 64;
/// Smallest accepted ratio of the smallest to the largest singular value of
/// the weighted design.
const RANK_TOL: f64 = 1e-12;

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

/// Shapley kernel weight of a coalition of size `s` among `m` features.
pub fn shapley_kernel_weight(m: usize, s: usize) -> Result<f64, ExplainError> {
    if m < 2 || s == 0 || s >= m {
        return Err(ExplainError::InvalidCoalitionSize { m, s });
    }
    Ok((m - 1) as f64 / (binomial(m, s) * s as f64 * (m - s) as f64))
}

/// Coalition masks and their regression weights.
#[derive(Debug, Clone, Default)]
pub(crate) struct Coalitions {
    pub masks: Vec<Vec<bool>>,
    pub weights: Vec<f64>,
}

impl Coalitions {
    fn push(&mut self, mask: Vec<bool>, w: f64) {
        self.masks.push(mask);
        self.weights.push(w);
    }
}

/// Calls `f` with every size-`s` subset of `0..m` in lexicographic order.
fn for_each_combination(m: usize, s: usize, mut f: impl FnMut(&[usize])) {
    if s == 0 || s > m {
        return;
    }
    let mut idx: Vec<usize> = (0..s).collect();
    loop {
        f(&idx);
        let mut i = s;
        while i > 0 && idx[i - 1] == m - s + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..s {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn mask_of(m: usize, members: &[usize]) -> Vec<bool> {
    let mut mask = vec![false; m];
    for &i in members {
        mask[i] = true;
    }
    mask
}

pub(crate) fn exact_coalitions(m: usize) -> Coalitions {
    let mut out = Coalitions::default();
    for s in 1..m {
        let w = shapley_kernel_weight(m, s).unwrap();
        for_each_combination(m, s, |members| out.push(mask_of(m, members), w));
    }
    out
}

/// Enumerates whole coalition sizes (smallest and their complements first)
/// while the budget covers them, then samples the remaining sizes in
/// proportion to their kernel mass, each draw paired with its complement.
pub(crate) fn sampled_coalitions(m: usize, budget: usize, rng: &mut ChaCha8Rng) -> Coalitions {
    let n_sizes = m / 2; // ceil((m - 1) / 2)
    let n_paired = (m - 1) / 2;
    let mut size_weight: Vec<f64> = (1..=n_sizes)
        .map(|s| (m - 1) as f64 / (s * (m - s)) as f64)
        .collect();
    for w in size_weight.iter_mut().take(n_paired) {
        *w *= 2.0;
    }
    let total: f64 = size_weight.iter().sum();
    size_weight.iter_mut().for_each(|w| *w /= total);

    let mut out = Coalitions::default();
    let mut left = budget as f64;
    let mut remaining = size_weight.clone();
    let mut n_full = 0;
    for s in 1..=n_sizes {
        let paired = s <= n_paired;
        let n_subsets = binomial(m, s) * if paired { 2.0 } else { 1.0 };
        if left * remaining[s - 1] / n_subsets < 1.0 - 1e-8 {
            break;
        }
        n_full += 1;
        left -= n_subsets;
        if remaining[s - 1] < 1.0 {
            let scale = 1.0 - remaining[s - 1];
            remaining.iter_mut().for_each(|w| *w /= scale);
        }
        let mut w = size_weight[s - 1] / binomial(m, s);
        if paired {
            w /= 2.0;
        }
        for_each_combination(m, s, |members| {
            let mask = mask_of(m, members);
            if paired {
                let comp: Vec<bool> = mask.iter().map(|b| !b).collect();
                out.push(mask, w);
                out.push(comp, w);
            } else {
                out.push(mask, w);
            }
        });
    }
    let n_fixed = out.masks.len();
    if n_full == n_sizes {
        return out;
    }

    let mut samples_left = budget.saturating_sub(n_fixed);
    let tail = &size_weight[n_full..];
    let dist = WeightedIndex::new(tail).expect("positive size weights");
    let mut seen: HashMap<Vec<bool>, usize> = HashMap::new();
    let mut attempts = 4 * budget.max(1);
    while samples_left > 0 && attempts > 0 {
        attempts -= 1;
        let s = dist.sample(rng) + n_full + 1;
        let members = sample_indices(rng, m, s).into_vec();
        let mask = mask_of(m, &members);
        let comp: Vec<bool> = mask.iter().map(|b| !b).collect();
        let paired = s <= n_paired;
        match seen.get(&mask) {
            Some(&i) => {
                out.weights[i] += 1.0;
                if paired {
                    if let Some(&j) = seen.get(&comp) {
                        out.weights[j] += 1.0;
                    }
                }
            }
            None => {
                seen.insert(mask.clone(), out.masks.len());
                out.push(mask, 1.0);
                samples_left -= 1;
                if paired && samples_left > 0 && !seen.contains_key(&comp) {
                    seen.insert(comp.clone(), out.masks.len());
                    out.push(comp, 1.0);
                    samples_left -= 1;
                }
            }
        }
    }
    let sampled_sum: f64 = out.weights[n_fixed..].iter().sum();
    if sampled_sum > 0.0 {
        let weight_left: f64 = tail.iter().sum();
        for w in &mut out.weights[n_fixed..] {
            *w *= weight_left / sampled_sum;
        }
    }
    out
}

/// Mean model output over the background with the features in each mask
/// taken from `x`.
fn coalition_values(
    model: &dyn Predictor,
    x: &[f64],
    background: ArrayView2<'_, f64>,
    masks: &[Vec<bool>],
) -> Vec<f64> {
    let (n_bg, m) = background.dim();
    let mut out = Vec::with_capacity(masks.len());
    for chunk in masks.chunks(EVAL_CHUNK) {
        let mut rows = Array2::zeros((chunk.len() * n_bg, m));
        for (c, mask) in chunk.iter().enumerate() {
            for b in 0..n_bg {
                let mut row = rows.row_mut(c * n_bg + b);
                for j in 0..m {
                    row[j] = if mask[j] { x[j] } else { background[(b, j)] };
                }
            }
        }
        let pred = model.predict_batch(rows.view());
        for c in 0..chunk.len() {
            let s: f64 = pred.slice(ndarray::s![c * n_bg..(c + 1) * n_bg]).sum();
            out.push(s / n_bg as f64);
        }
    }
    out
}

/// Attributions for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapValues {
    pub base_value: f64,
    pub phi: Vec<f64>,
    pub prediction: f64,
    /// True when every coalition was enumerated.
    pub exact: bool,
}

impl ShapValues {
    pub fn reconstructed(&self) -> f64 {
        self.base_value + self.phi.iter().sum::<f64>()
    }
}

/// Solves the kernel-weighted regression with `sum(phi) = total` built in by
/// eliminating the last attribution.
fn solve_constrained(
    coalitions: &Coalitions,
    values: &[f64],
    base: f64,
    total: f64,
    m: usize,
) -> Option<Vec<f64>> {
    let n = coalitions.masks.len();
    let mut a = DMatrix::zeros(n, m - 1);
    let mut rhs = DVector::zeros(n);
    for (r, (mask, &w)) in coalitions.masks.iter().zip(&coalitions.weights).enumerate() {
        let sw = w.sqrt();
        let last = if mask[m - 1] { 1.0 } else { 0.0 };
        for j in 0..m - 1 {
            let zj = if mask[j] { 1.0 } else { 0.0 };
            a[(r, j)] = sw * (zj - last);
        }
        rhs[r] = sw * (values[r] - base - last * total);
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin <= RANK_TOL * smax {
        return None;
    }
    let sol = svd.solve(&rhs, 0.0).ok()?;
    let mut phi: Vec<f64> = sol.iter().copied().collect();
    let partial: f64 = phi.iter().sum();
    phi.push(total - partial);
    Some(phi)
}

/// Kernel SHAP values of `model` at `x` against `background`.
///
/// All `2^M - 2` proper coalitions are enumerated when the budget allows
/// it; otherwise `n_coalitions` are sampled from `seed`. A rank-deficient
/// sample is retried once with twice the budget.
pub fn kernel_shap(
    model: &dyn Predictor,
    x: &[f64],
    background: ArrayView2<'_, f64>,
    n_coalitions: usize,
    seed: u64,
) -> Result<ShapValues, ExplainError> {
    let m = x.len();
    if background.nrows() == 0 {
        return Err(ExplainError::EmptyBackground);
    }
    if background.ncols() != m || model.n_features() != m {
        return Err(ExplainError::LengthMismatch {
            expected: model.n_features(),
            got: m,
        });
    }
    let base_value = model.predict_batch(background).mean().unwrap();
    let prediction = model.predict(x);
    let total = prediction - base_value;
    if m == 1 {
        return Ok(ShapValues {
            base_value,
            phi: vec![total],
            prediction,
            exact: true,
        });
    }
    let exact = m < 63 && (1u64 << m) - 2 <= n_coalitions as u64;
    if exact {
        let coalitions = exact_coalitions(m);
        let values = coalition_values(model, x, background, &coalitions.masks);
        let phi = solve_constrained(&coalitions, &values, base_value, total, m)
            .ok_or(ExplainError::DegenerateSystem { n_coalitions })?;
        return Ok(ShapValues {
            base_value,
            phi,
            prediction,
            exact: true,
        });
    }
    if n_coalitions < 2 * m {
        return Err(ExplainError::BudgetTooSmall { n_coalitions, m });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for budget in [n_coalitions, 2 * n_coalitions] {
        let coalitions = sampled_coalitions(m, budget, &mut rng);
        let values = coalition_values(model, x, background, &coalitions.masks);
        if let Some(phi) = solve_constrained(&coalitions, &values, base_value, total, m) {
            return Ok(ShapValues {
                base_value,
                phi,
                prediction,
                exact: false,
            });
        }
    }
    Err(ExplainError::DegenerateSystem {
        n_coalitions: 2 * n_coalitions,
    })
}
