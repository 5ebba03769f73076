//! Fully connected ReLU regressor trained on the full batch.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LabeledSample, NeuralError};
use crate::predictor::Predictor;

/// Loss improvements smaller than this count as a stall.
pub const IMPROVEMENT_TOL: f64 = 1e-6;
/// The adaptive schedule stops once the learning rate drops below this.
pub const MIN_LEARNING_RATE: f64 = 1e-6;
const ADAPTIVE_DECAY: f64 = 5.0;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const LBFGS_MEMORY: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Solver {
    #[serde(rename = "adaptive-moment")]
    Adam,
    #[serde(rename = "quasi-newton")]
    Lbfgs,
}

impl Solver {
    pub fn as_str(self) -> &'static str {
        match self {
            Solver::Adam => "adaptive-moment",
            Solver::Lbfgs => "quasi-newton",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    Constant,
    Adaptive,
}

impl LrSchedule {
    pub fn as_str(self) -> &'static str {
        match self {
            LrSchedule::Constant => "constant",
            LrSchedule::Adaptive => "adaptive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub layer1: usize,
    /// 0 means a single hidden layer.
    pub layer2: usize,
    pub l2: f64,
    pub solver: Solver,
    pub lr0: f64,
    pub lr_schedule: LrSchedule,
    pub max_iter: usize,
    pub patience: usize,
}

impl Hyperparams {
    /// Settings a full search selected for SOS.
    pub fn tuned_sos() -> Self {
        Self {
            layer1: 100,
            layer2: 0,
            l2: 0.0290,
            solver: Solver::Adam,
            lr0: 0.0031,
            lr_schedule: LrSchedule::Constant,
            max_iter: 8000,
            patience: 20,
        }
    }

    pub fn tuned_pos() -> Self {
        Self {
            layer1: 70,
            layer2: 0,
            l2: 0.0010,
            solver: Solver::Adam,
            lr0: 0.0003,
            lr_schedule: LrSchedule::Adaptive,
            max_iter: 8000,
            patience: 50,
        }
    }

    pub fn tuned_peak() -> Self {
        Self {
            layer1: 30,
            layer2: 100,
            l2: 0.0606,
            solver: Solver::Adam,
            lr0: 0.0028,
            lr_schedule: LrSchedule::Adaptive,
            max_iter: 8000,
            patience: 100,
        }
    }

    /// Checks every field against the explored search ranges.
    pub fn validate(&self) -> Result<(), NeuralError> {
        let bad = |what: &str| Err(NeuralError::InvalidHyperparams(what.to_string()));
        if !(10..=100).contains(&self.layer1) || self.layer1 % 10 != 0 {
            return bad("layer1 must be one of 10, 20, ..., 100");
        }
        if self.layer2 > 100 || self.layer2 % 10 != 0 {
            return bad("layer2 must be one of 0, 10, ..., 100");
        }
        if !(1e-4..=1e-1).contains(&self.l2) {
            return bad("l2 must lie in [1e-4, 1e-1]");
        }
        if !(1e-4..=1e-1).contains(&self.lr0) {
            return bad("lr0 must lie in [1e-4, 1e-1]");
        }
        if !(1000..=10000).contains(&self.max_iter) || self.max_iter % 1000 != 0 {
            return bad("max_iter must be one of 1000, 2000, ..., 10000");
        }
        if !(10..=100).contains(&self.patience) || self.patience % 10 != 0 {
            return bad("patience must be one of 10, 20, ..., 100");
        }
        Ok(())
    }

    pub fn layer_sizes(&self, n_in: usize) -> Vec<usize> {
        let mut sizes = vec![n_in, self.layer1];
        if self.layer2 > 0 {
            sizes.push(self.layer2);
        }
        sizes.push(1);
        sizes
    }
}

/// Per-feature z-scoring fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// Features whose training sd was zero; they are scaled by 1.
    pub constant_features: Vec<usize>,
}

impl Scaler {
    pub fn fit(x: ArrayView2<'_, f64>) -> Self {
        let n = x.nrows() as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut sd = Vec::with_capacity(x.ncols());
        let mut constant_features = Vec::new();
        for (j, col) in x.columns().into_iter().enumerate() {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            let s = var.sqrt();
            mean.push(m);
            if s > 0.0 && s.is_finite() {
                sd.push(s);
            } else {
                sd.push(1.0);
                constant_features.push(j);
            }
        }
        Self {
            mean,
            sd,
            constant_features,
        }
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.mean[j], self.sd[j]);
            col.mapv_inplace(|v| (v - m) / s);
        }
        out
    }
}

/// Number of parameters of a network with the given layer sizes.
pub fn n_params(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Offsets of each layer's weight block (row-major, `n_in x n_out`) and
/// bias block inside the flat parameter vector.
fn layer_offsets(sizes: &[usize]) -> Vec<(usize, usize)> {
    let mut off = 0;
    sizes
        .windows(2)
        .map(|w| {
            let wo = off;
            let bo = off + w[0] * w[1];
            off = bo + w[1];
            (wo, bo)
        })
        .collect()
}

/// He-uniform weights, zero hidden biases, output bias set to `output_bias`.
pub fn init_params(sizes: &[usize], seed: u64, output_bias: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = vec![0.0; n_params(sizes)];
    for (l, &(wo, bo)) in layer_offsets(sizes).iter().enumerate() {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let limit = (6.0 / n_in as f64).sqrt();
        for p in &mut params[wo..wo + n_in * n_out] {
            *p = rng.random_range(-limit..limit);
        }
        if l + 2 == sizes.len() {
            params[bo..bo + n_out].fill(output_bias);
        }
    }
    params
}

fn forward(sizes: &[usize], params: &[f64], x: ArrayView2<'_, f64>) -> Vec<Array2<f64>> {
    let offsets = layer_offsets(sizes);
    let mut acts: Vec<Array2<f64>> = Vec::with_capacity(sizes.len());
    acts.push(x.to_owned());
    for (l, &(wo, bo)) in offsets.iter().enumerate() {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let w = ArrayView2::from_shape((n_in, n_out), &params[wo..wo + n_in * n_out]).unwrap();
        let b = ArrayView1::from(&params[bo..bo + n_out]);
        let mut z = acts[l].dot(&w);
        z += &b;
        if l + 1 < offsets.len() {
            z.mapv_inplace(|v| v.max(0.0));
        }
        acts.push(z);
    }
    acts
}

/// Network output for already-scaled inputs.
pub fn forward_output(sizes: &[usize], params: &[f64], x: ArrayView2<'_, f64>) -> Array1<f64> {
    let acts = forward(sizes, params, x);
    acts.last().unwrap().column(0).to_owned()
}

/// `0.5 * mean((f(x) - y)^2) + l2 * sum(W^2)` and its gradient, written to
/// `grad`. Biases are not penalised.
pub fn loss_and_gradient(
    sizes: &[usize],
    params: &[f64],
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    l2: f64,
    grad: &mut [f64],
) -> f64 {
    let offsets = layer_offsets(sizes);
    let acts = forward(sizes, params, x);
    let n = x.nrows() as f64;
    let out = acts.last().unwrap();
    let diff: Array1<f64> = &out.column(0) - &y;
    let mut loss = 0.5 * diff.dot(&diff) / n;
    for (l, &(wo, _)) in offsets.iter().enumerate() {
        let w = &params[wo..wo + sizes[l] * sizes[l + 1]];
        loss += l2 * w.iter().map(|v| v * v).sum::<f64>();
    }

    let mut delta = (diff / n).insert_axis(Axis(1));
    for l in (0..offsets.len()).rev() {
        let (wo, bo) = offsets[l];
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let w = ArrayView2::from_shape((n_in, n_out), &params[wo..wo + n_in * n_out]).unwrap();
        {
            let (gw_slice, rest) = grad[wo..].split_at_mut(n_in * n_out);
            let mut gw = ArrayViewMut2::from_shape((n_in, n_out), gw_slice).unwrap();
            gw.assign(&w);
            general_mat_mul(1.0, &acts[l].t(), &delta, 2.0 * l2, &mut gw);
            let gb = delta.sum_axis(Axis(0));
            let gb_off = bo - wo - n_in * n_out;
            rest[gb_off..gb_off + n_out].copy_from_slice(gb.as_slice().unwrap());
        }
        if l > 0 {
            let mut next = delta.dot(&w.t());
            next.zip_mut_with(&acts[l], |d, a| {
                if *a <= 0.0 {
                    *d = 0.0;
                }
            });
            delta = next;
        }
    }
    loss
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layer_sizes: Vec<usize>,
    /// Per layer, row-major `n_in x n_out`.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub scaler: Scaler,
    pub hyperparams: Hyperparams,
    pub seed: u64,
    pub final_loss: f64,
    pub iterations: usize,
}

impl MlpModel {
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(n_params(&self.layer_sizes));
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    fn from_flat(
        sizes: Vec<usize>,
        params: &[f64],
        scaler: Scaler,
        hp: Hyperparams,
        seed: u64,
        loss: f64,
        iters: usize,
    ) -> Self {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (l, &(wo, bo)) in layer_offsets(&sizes).iter().enumerate() {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            weights.push(params[wo..wo + n_in * n_out].to_vec());
            biases.push(params[bo..bo + n_out].to_vec());
        }
        Self {
            layer_sizes: sizes,
            weights,
            biases,
            scaler,
            hyperparams: hp,
            seed,
            final_loss: loss,
            iterations: iters,
        }
    }

    /// Checks that stored shapes agree with `layer_sizes`.
    pub fn check_shapes(&self) -> Result<(), NeuralError> {
        let s = &self.layer_sizes;
        let ok = s.len() >= 2
            && *s.last().unwrap() == 1
            && self.weights.len() == s.len() - 1
            && self.biases.len() == s.len() - 1
            && s.windows(2)
                .zip(self.weights.iter().zip(&self.biases))
                .all(|(w, (wt, b))| wt.len() == w[0] * w[1] && b.len() == w[1])
            && self.scaler.mean.len() == s[0]
            && self.scaler.sd.len() == s[0];
        if ok {
            Ok(())
        } else {
            Err(NeuralError::ShapeMismatch)
        }
    }
}

impl Predictor for MlpModel {
    fn n_features(&self) -> usize {
        self.layer_sizes[0]
    }

    fn predict_batch(&self, rows: ArrayView2<'_, f64>) -> Array1<f64> {
        let mut a = self.scaler.transform(rows);
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let w =
                ArrayView2::from_shape((self.layer_sizes[l], self.layer_sizes[l + 1]), w).unwrap();
            let mut z = a.dot(&w);
            z += &ArrayView1::from(b);
            if l < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            a = z;
        }
        a.column(0).to_owned()
    }
}

pub(crate) fn design_matrix(samples: &[LabeledSample]) -> (Array2<f64>, Array1<f64>) {
    let m = samples.first().map_or(0, |s| s.features.values.len());
    let mut x = Array2::zeros((samples.len(), m));
    for (mut row, s) in x.rows_mut().into_iter().zip(samples) {
        row.assign(&ArrayView1::from(&s.features.values));
    }
    let y = samples.iter().map(|s| s.target).collect();
    (x, y)
}

struct Stall {
    best: f64,
    count: usize,
}

impl Stall {
    fn new() -> Self {
        Self {
            best: f64::INFINITY,
            count: 0,
        }
    }

    /// Records `loss`; returns the current stall length.
    fn update(&mut self, loss: f64) -> usize {
        if loss < self.best - IMPROVEMENT_TOL {
            self.best = loss;
            self.count = 0;
        } else {
            self.count += 1;
        }
        self.count
    }
}

fn run_adam(
    sizes: &[usize],
    params: &mut [f64],
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    hp: &Hyperparams,
) -> Result<usize, NeuralError> {
    let np = params.len();
    let (mut m, mut v, mut g) = (vec![0.0; np], vec![0.0; np], vec![0.0; np]);
    let mut lr = hp.lr0;
    let mut stall = Stall::new();
    let (mut b1t, mut b2t) = (1.0, 1.0);
    for it in 1..=hp.max_iter {
        let loss = loss_and_gradient(sizes, params, x, y, hp.l2, &mut g);
        if !loss.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(NeuralError::NonFiniteLoss { iteration: it });
        }
        if stall.update(loss) >= hp.patience {
            match hp.lr_schedule {
                LrSchedule::Constant => return Ok(it),
                LrSchedule::Adaptive => {
                    lr /= ADAPTIVE_DECAY;
                    stall.count = 0;
                    if lr < MIN_LEARNING_RATE {
                        return Ok(it);
                    }
                }
            }
        }
        b1t *= ADAM_BETA1;
        b2t *= ADAM_BETA2;
        let step = lr * (1.0 - b2t).sqrt() / (1.0 - b1t);
        for i in 0..np {
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
            params[i] -= step * m[i] / (v[i].sqrt() + ADAM_EPS);
        }
    }
    Ok(hp.max_iter)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Limited-memory BFGS with Armijo backtracking. The learning rate and its
/// schedule do not apply.
fn run_lbfgs(
    sizes: &[usize],
    params: &mut [f64],
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    hp: &Hyperparams,
) -> Result<usize, NeuralError> {
    let np = params.len();
    let mut g = vec![0.0; np];
    let mut f = loss_and_gradient(sizes, params, x, y, hp.l2, &mut g);
    if !f.is_finite() {
        return Err(NeuralError::NonFiniteLoss { iteration: 0 });
    }
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut stall = Stall::new();
    stall.update(f);
    let mut trial = vec![0.0; np];
    let mut g_new = vec![0.0; np];
    for it in 1..=hp.max_iter {
        // two-loop recursion
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let k = s_hist.len();
        let mut alpha = vec![0.0; k];
        for i in (0..k).rev() {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            alpha[i] = rho * dot(&s_hist[i], &d);
            for (dj, yj) in d.iter_mut().zip(&y_hist[i]) {
                *dj -= alpha[i] * yj;
            }
        }
        if k > 0 {
            let gamma = dot(&s_hist[k - 1], &y_hist[k - 1]) / dot(&y_hist[k - 1], &y_hist[k - 1]);
            d.iter_mut().for_each(|v| *v *= gamma);
        }
        for i in 0..k {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            let beta = rho * dot(&y_hist[i], &d);
            for (dj, sj) in d.iter_mut().zip(&s_hist[i]) {
                *dj += (alpha[i] - beta) * sj;
            }
        }
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            s_hist.clear();
            y_hist.clear();
            d = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        if slope == 0.0 {
            return Ok(it);
        }
        let mut t = if k == 0 {
            (1.0 / d.iter().map(|v| v.abs()).fold(0.0, f64::max)).min(1.0)
        } else {
            1.0
        };
        let mut f_new = f64::INFINITY;
        let mut found = false;
        for _ in 0..50 {
            for i in 0..np {
                trial[i] = params[i] + t * d[i];
            }
            f_new = loss_and_gradient(sizes, &trial, x, y, hp.l2, &mut g_new);
            if f_new.is_finite() && f_new <= f + 1e-4 * t * slope {
                found = true;
                break;
            }
            t *= 0.5;
        }
        if !found {
            return Ok(it);
        }
        let s: Vec<f64> = (0..np).map(|i| trial[i] - params[i]).collect();
        let yv: Vec<f64> = (0..np).map(|i| g_new[i] - g[i]).collect();
        if dot(&s, &yv) > 1e-10 {
            if s_hist.len() == LBFGS_MEMORY {
                s_hist.remove(0);
                y_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(yv);
        }
        params.copy_from_slice(&trial);
        std::mem::swap(&mut g, &mut g_new);
        f = f_new;
        if stall.update(f) >= hp.patience {
            return Ok(it);
        }
    }
    Ok(hp.max_iter)
}

/// Trains a network on `train` with the given settings. The output bias
/// starts at the mean training target.
pub fn train_mlp(
    train: &[LabeledSample],
    hp: &Hyperparams,
    seed: u64,
) -> Result<MlpModel, NeuralError> {
    if train.is_empty() {
        return Err(NeuralError::EmptyTrainingSet);
    }
    hp.validate()?;
    let (x_raw, y) = design_matrix(train);
    let scaler = Scaler::fit(x_raw.view());
    let x = scaler.transform(x_raw.view());
    let sizes = hp.layer_sizes(x.ncols());
    let mean_y = y.sum() / y.len() as f64;
    let mut params = init_params(&sizes, seed, mean_y);
    let iterations = match hp.solver {
        Solver::Adam => run_adam(&sizes, &mut params, x.view(), y.view(), hp)?,
        Solver::Lbfgs => run_lbfgs(&sizes, &mut params, x.view(), y.view(), hp)?,
    };
    let mut g = vec![0.0; params.len()];
    let final_loss = loss_and_gradient(&sizes, &params, x.view(), y.view(), hp.l2, &mut g);
    if !final_loss.is_finite() {
        return Err(NeuralError::NonFiniteLoss {
            iteration: iterations,
        });
    }
    Ok(MlpModel::from_flat(
        sizes, &params, scaler, *hp, seed, final_loss, iterations,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::FeatureVector;

    fn dataset(
        n: usize,
        m: usize,
        seed: u64,
        target: impl Fn(&[f64]) -> f64,
    ) -> Vec<LabeledSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let values: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
                let t = target(&values);
                LabeledSample {
                    features: FeatureVector {
                        plot_id: format!("P{i}"),
                        year: 2014,
                        values,
                    },
                    target: t,
                }
            })
            .collect()
    }

    fn hp() -> Hyperparams {
        Hyperparams {
            layer1: 20,
            layer2: 0,
            l2: 1e-4,
            solver: Solver::Adam,
            lr0: 0.01,
            lr_schedule: LrSchedule::Adaptive,
            max_iter: 3000,
            patience: 20,
        }
    }

    #[test]
    fn validation_ranges() {
        assert!(Hyperparams::tuned_sos().validate().is_ok());
        assert!(Hyperparams::tuned_pos().validate().is_ok());
        assert!(Hyperparams::tuned_peak().validate().is_ok());
        assert!(Hyperparams { layer1: 5, ..hp() }.validate().is_err());
        assert!(Hyperparams { layer2: 15, ..hp() }.validate().is_err());
        assert!(Hyperparams { l2: 0.5, ..hp() }.validate().is_err());
        assert!(Hyperparams {
            max_iter: 1500,
            ..hp()
        }
        .validate()
        .is_err());
        assert!(Hyperparams {
            patience: 0,
            ..hp()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn param_layout() {
        assert_eq!(n_params(&[79, 20, 1]), 79 * 20 + 20 + 20 + 1);
        let p = init_params(&[3, 4, 1], 0, 7.5);
        assert_eq!(p.len(), 21);
        assert_eq!(p[20], 7.5);
        assert!(p[12..16].iter().all(|b| *b == 0.0));
        let lim = 2f64.sqrt();
        assert!(p[..12].iter().all(|w| w.abs() <= lim));
    }

    #[test]
    fn gradient_matches_finite_differences_small() {
        let data = dataset(15, 4, 1, |v| v[0] - 2.0 * v[1] * v[2]);
        let (x, y) = design_matrix(&data);
        let sizes = [4, 6, 5, 1];
        let params = init_params(&sizes, 3, 0.1);
        let mut g = vec![0.0; params.len()];
        loss_and_gradient(&sizes, &params, x.view(), y.view(), 0.01, &mut g);
        let mut scratch = vec![0.0; params.len()];
        for i in 0..params.len() {
            let h = 1e-5;
            let mut p = params.clone();
            p[i] += h;
            let fp = loss_and_gradient(&sizes, &p, x.view(), y.view(), 0.01, &mut scratch);
            p[i] -= 2.0 * h;
            let fm = loss_and_gradient(&sizes, &p, x.view(), y.view(), 0.01, &mut scratch);
            let fd = (fp - fm) / (2.0 * h);
            let denom = g[i].abs().max(fd.abs());
            if denom > 0.0 {
                assert!(
                    (g[i] - fd).abs() / denom < 1e-4,
                    "coordinate {i}: {} vs {fd}",
                    g[i]
                );
            }
        }
    }

    #[test]
    fn shrinks_to_zero_target() {
        let data = dataset(50, 5, 2, |_| 0.0);
        let m = train_mlp(&data, &Hyperparams { l2: 0.1, ..hp() }, 4).unwrap();
        for s in &data {
            assert!(m.predict(&s.features.values).abs() < 1e-2);
        }
    }

    #[test]
    fn learns_linear_target() {
        let data = dataset(200, 79, 5, |v| {
            v.iter()
                .enumerate()
                .map(|(i, x)| 0.01 * (i % 7) as f64 * x)
                .sum()
        });
        let m = train_mlp(&data, &hp(), 1).unwrap();
        let mse: f64 = data
            .iter()
            .map(|s| (m.predict(&s.features.values) - s.target).powi(2))
            .sum::<f64>()
            / 200.0;
        assert!(mse < 1e-2, "{mse}");
    }

    #[test]
    fn quasi_newton_learns_too() {
        let data = dataset(80, 3, 6, |v| 1.5 * v[0] - v[2] + 3.0);
        let m = train_mlp(
            &data,
            &Hyperparams {
                solver: Solver::Lbfgs,
                max_iter: 1000,
                ..hp()
            },
            2,
        )
        .unwrap();
        let mse: f64 = data
            .iter()
            .map(|s| (m.predict(&s.features.values) - s.target).powi(2))
            .sum::<f64>()
            / 80.0;
        assert!(mse < 1e-2, "{mse}");
    }

    #[test]
    fn same_seed_same_weights() {
        let data = dataset(40, 6, 7, |v| v[1].sin());
        let h = Hyperparams {
            max_iter: 1000,
            ..hp()
        };
        let a = train_mlp(&data, &h, 9).unwrap();
        let b = train_mlp(&data, &h, 9).unwrap();
        assert_eq!(a, b);
        let c = train_mlp(&data, &h, 10).unwrap();
        assert_ne!(a.weights, c.weights);
    }

    #[test]
    fn batch_and_single_agree() {
        let data = dataset(30, 4, 8, |v| v[0] * v[1]);
        let m = train_mlp(
            &data,
            &Hyperparams {
                max_iter: 1000,
                layer2: 10,
                ..hp()
            },
            0,
        )
        .unwrap();
        let (x, _) = design_matrix(&data);
        let batch = m.predict_batch(x.view());
        for (i, s) in data.iter().enumerate() {
            assert_eq!(batch[i], m.predict(&s.features.values));
        }
        m.check_shapes().unwrap();
    }

    #[test]
    fn constant_feature_flagged() {
        let mut data = dataset(20, 3, 9, |v| v[0]);
        for s in &mut data {
            s.features.values[1] = 4.0;
        }
        let (x, _) = design_matrix(&data);
        let sc = Scaler::fit(x.view());
        assert_eq!(sc.constant_features, vec![1]);
        assert_eq!(sc.sd[1], 1.0);
    }
}
