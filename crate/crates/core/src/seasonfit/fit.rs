use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{
    derivative_gap_gradient, eval_double_logistic, eval_jacobian, DoubleLogisticParams, N_FREE,
};
use super::trf::{self, Bounds, LeastSquaresProblem, TrfOptions};
use super::FitError;
use crate::data::NdviSample;

/// Box bounds on the free parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamBounds {
    /// Range for `a1` and `p`, in weeks.
    pub location: (f64, f64),
    /// Range for `b1` and `b2`, in 1/week.
    pub steepness: (f64, f64),
    pub amplitude: (f64, f64),
    pub baseline: (f64, f64),
}

impl Default for ParamBounds {
    fn default() -> Self {
        Self {
            location: (0.0, 52.0),
            steepness: (-10.0, -0.01),
            amplitude: (0.01, 2.0),
            baseline: (-1.0, 1.0),
        }
    }
}

impl ParamBounds {
    fn to_box(self) -> Bounds {
        let ParamBounds {
            location: l,
            steepness: s,
            amplitude: a,
            baseline: b,
        } = self;
        Bounds {
            lower: vec![l.0, s.0, s.0, a.0, b.0, l.0],
            upper: vec![l.1, s.1, s.1, a.1, b.1, l.1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Weight of the squared derivative gap at `p` in the objective.
    pub lambda: f64,
    pub bounds: ParamBounds,
    /// Jittered restarts on top of the data-driven start.
    pub restarts: usize,
    pub seed: u64,
    pub ftol: f64,
    pub gtol: f64,
    pub xtol: f64,
    pub max_iter: usize,
    /// Amplitudes at or below this are flagged as degenerate.
    pub c_min: f64,
    pub min_points: usize,
    pub min_span_weeks: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            lambda: 10.0,
            bounds: ParamBounds::default(),
            restarts: 4,
            seed: 0,
            ftol: 1e-8,
            gtol: 1e-8,
            xtol: 1e-10,
            max_iter: 500,
            c_min: 0.02,
            min_points: 7,
            min_span_weeks: 10.0,
        }
    }
}

/// Result of fitting one plot-year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonFit {
    pub plot_id: String,
    pub year: i32,
    pub params: DoubleLogisticParams,
    pub r2: f64,
    pub mse: f64,
    pub n_points: usize,
    pub converged: bool,
    pub derivative_gap_at_p: f64,
}

impl SeasonFit {
    pub fn is_degenerate(&self, c_min: f64) -> bool {
        self.params.c <= c_min
    }
}

/// Residuals `(f(x_i) - y_i)/sqrt(n)` plus `sqrt(lambda) * gap(p)`, so the
/// squared norm is the penalised MSE.
struct SeasonProblem<'a> {
    weeks: &'a [f64],
    ndvi: &'a [f64],
    inv_sqrt_n: f64,
    sqrt_lambda: f64,
}

const MIN_PEAK_SEPARATION: f64 = 1e-3;

impl LeastSquaresProblem for SeasonProblem<'_> {
    fn n_params(&self) -> usize {
        N_FREE
    }

    fn n_residuals(&self) -> usize {
        self.weeks.len() + 1
    }

    fn residuals(&self, x: &[f64], out: &mut [f64]) {
        let params = DoubleLogisticParams::from_free_slice(x);
        for (i, (&w, &y)) in self.weeks.iter().zip(self.ndvi).enumerate() {
            out[i] = (eval_double_logistic(&params, w) - y) * self.inv_sqrt_n;
        }
        out[self.weeks.len()] = self.sqrt_lambda * params.derivative_gap();
    }

    fn jacobian(&self, x: &[f64], out: &mut DMatrix<f64>) {
        let params = DoubleLogisticParams::from_free_slice(x);
        for (i, &w) in self.weeks.iter().enumerate() {
            let g = eval_jacobian(&params, w);
            for (k, gk) in g.iter().enumerate() {
                out[(i, k)] = gk * self.inv_sqrt_n;
            }
        }
        let gg = derivative_gap_gradient(&params);
        let last = self.weeks.len();
        for (k, gk) in gg.iter().enumerate() {
            out[(last, k)] = gk * self.sqrt_lambda;
        }
    }

    fn is_feasible(&self, x: &[f64]) -> bool {
        // a1 < p keeps a2 > p; the sum bound keeps the plateau a valid NDVI
        x[5] > x[0] + MIN_PEAK_SEPARATION && x[4] + x[3] <= 1.0 + 1e-9
    }
}

fn initial_guess(weeks: &[f64], ndvi: &[f64], bounds: &ParamBounds) -> [f64; N_FREE] {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut imax = 0;
    for (i, &v) in ndvi.iter().enumerate() {
        lo = lo.min(v);
        if v > hi {
            hi = v;
            imax = i;
        }
    }
    let d0 = lo;
    let c0 = (hi - lo).max(2.0 * bounds.amplitude.0);
    let p0 = weeks[imax];
    let half = d0 + c0 / 2.0;
    let cross = ndvi[..=imax].iter().position(|&v| v >= half).unwrap_or(0);
    let mut a1 = if cross == 0 {
        weeks[0]
    } else {
        0.5 * (weeks[cross - 1] + weeks[cross])
    };
    if a1 > p0 - 0.5 {
        a1 = p0 - 2.0;
    }
    [a1, -0.5, -0.5, c0, d0, p0]
}

/// Clamps a start point into the box and the feasible region.
fn sanitize_start(mut x: [f64; N_FREE], bounds: &ParamBounds) -> [f64; N_FREE] {
    let (llo, lhi) = bounds.location;
    x[5] = x[5].clamp(llo + 1.0, lhi - 1e-6);
    x[0] = x[0].clamp(llo + 1e-6, x[5] - 0.5);
    x[1] = x[1].clamp(bounds.steepness.0, bounds.steepness.1);
    x[2] = x[2].clamp(bounds.steepness.0, bounds.steepness.1);
    x[3] = x[3].clamp(bounds.amplitude.0, bounds.amplitude.1);
    x[4] = x[4].clamp(bounds.baseline.0, bounds.baseline.1);
    if x[3] + x[4] > 1.0 {
        x[3] = (1.0 - x[4]).max(bounds.amplitude.0 * 1.5);
        x[4] = x[4].min(1.0 - x[3]);
    }
    x
}

fn r_squared(weeks: &[f64], ndvi: &[f64], params: &DoubleLogisticParams) -> (f64, f64) {
    let n = ndvi.len() as f64;
    let mean = ndvi.iter().sum::<f64>() / n;
    let ss_tot: f64 = ndvi.iter().map(|y| (y - mean).powi(2)).sum();
    let ss_res: f64 = weeks
        .iter()
        .zip(ndvi)
        .map(|(&w, &y)| (eval_double_logistic(params, w) - y).powi(2))
        .sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        0.0
    };
    (r2, ss_res / n)
}

/// Fits the double logistic curve to one plot-year.
///
/// The samples may arrive in any order; they are sorted by week first, so
/// the result does not depend on input order. The winning start is the
/// converged restart with the lowest penalised MSE.
pub fn fit_season(samples: &[NdviSample], opts: &FitOptions) -> Result<SeasonFit, FitError> {
    if samples.len() < opts.min_points.max(N_FREE + 1) {
        return Err(FitError::TooFewPoints {
            needed: opts.min_points.max(N_FREE + 1),
            got: samples.len(),
        });
    }
    let mut sorted: Vec<(f64, f64)> = samples.iter().map(|s| (s.week, s.ndvi)).collect();
    if sorted.iter().any(|(w, v)| !w.is_finite() || !v.is_finite()) {
        return Err(FitError::NonFinite);
    }
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let weeks: Vec<f64> = sorted.iter().map(|s| s.0).collect();
    let ndvi: Vec<f64> = sorted.iter().map(|s| s.1).collect();
    let span = weeks[weeks.len() - 1] - weeks[0];
    if span < opts.min_span_weeks {
        return Err(FitError::InsufficientSpan {
            span,
            needed: opts.min_span_weeks,
        });
    }

    let problem = SeasonProblem {
        weeks: &weeks,
        ndvi: &ndvi,
        inv_sqrt_n: 1.0 / (weeks.len() as f64).sqrt(),
        sqrt_lambda: opts.lambda.max(0.0).sqrt(),
    };
    let bounds = opts.bounds.to_box();
    let trf_opts = TrfOptions {
        ftol: opts.ftol,
        gtol: opts.gtol,
        xtol: opts.xtol,
        max_iter: opts.max_iter,
    };

    let base = initial_guess(&weeks, &ndvi, &opts.bounds);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = vec![sanitize_start(base, &opts.bounds)];
    for _ in 0..opts.restarts {
        let mut s = base;
        s[0] += rng.random_range(-3.0..3.0);
        s[5] += rng.random_range(-3.0..3.0);
        s[1] = rng.random_range(-1.5..-0.2);
        s[2] = rng.random_range(-1.5..-0.2);
        s[3] *= rng.random_range(0.8..1.2);
        s[4] += rng.random_range(-0.05..0.05);
        starts.push(sanitize_start(s, &opts.bounds));
    }

    let mut best: Option<(bool, f64, Vec<f64>)> = None;
    for start in &starts {
        let rep = trf::minimize(&problem, start, &bounds, &trf_opts);
        let conv = rep.termination.converged();
        let better = match &best {
            None => true,
            Some((bconv, bcost, _)) => (conv && !bconv) || (conv == *bconv && rep.cost < *bcost),
        };
        if better && rep.cost.is_finite() {
            best = Some((conv, rep.cost, rep.x));
        }
    }
    let (converged, _, x) = best.ok_or(FitError::NonFinite)?;
    let params = DoubleLogisticParams::from_free_slice(&x);
    let (r2, mse) = r_squared(&weeks, &ndvi, &params);
    let plot_id = samples[0].plot_id.clone();
    let year = samples[0].year;
    let fit = SeasonFit {
        plot_id: plot_id.clone(),
        year,
        params,
        r2,
        mse,
        n_points: weeks.len(),
        converged,
        derivative_gap_at_p: params.derivative_gap(),
    };
    if converged {
        Ok(fit)
    } else {
        Err(FitError::NoConvergence {
            plot_id,
            year,
            best: Box::new(fit),
        })
    }
}
