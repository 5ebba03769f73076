//! Minimal regression interface shared by the trained networks and the
//! explainer.

use ndarray::{Array1, ArrayView2};

pub trait Predictor: Sync {
    fn n_features(&self) -> usize;

    /// One prediction per row of `rows`.
    fn predict_batch(&self, rows: ArrayView2<'_, f64>) -> Array1<f64>;

    fn predict(&self, x: &[f64]) -> f64 {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row shape");
        self.predict_batch(view)[0]
    }
}

/// Always returns the same value; the naive baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanPredictor {
    pub mean: f64,
    pub n_features: usize,
}

impl MeanPredictor {
    pub fn fit(targets: &[f64], n_features: usize) -> Self {
        let mean = targets.iter().sum::<f64>() / targets.len() as f64;
        Self { mean, n_features }
    }
}

impl Predictor for MeanPredictor {
    fn n_features(&self) -> usize {
        self.n_features
    }
    fn predict_batch(&self, rows: ArrayView2<'_, f64>) -> Array1<f64> {
        Array1::from_elem(rows.nrows(), self.mean)
    }
}

/// Wraps a plain function of one feature row.
pub struct FnPredictor<F> {
    pub n_features: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> Predictor for FnPredictor<F> {
    fn n_features(&self) -> usize {
        self.n_features
    }
    fn predict_batch(&self, rows: ArrayView2<'_, f64>) -> Array1<f64> {
        rows.rows()
            .into_iter()
            .map(|r| match r.as_slice() {
                Some(s) => (self.f)(s),
                None => (self.f)(&r.to_vec()),
            })
            .collect()
    }
}
