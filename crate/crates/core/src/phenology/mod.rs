//! Season landmarks (SOS, POS, PEAK) from fitted curves and the r² quality
//! filter.

mod io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seasonfit::{eval_double_logistic, SeasonFit};

pub use io::{read_phenology, write_phenology};

/// Fits with r² below this are excluded.
pub const QC_MIN_R2: f64 = 0.80;
/// Grid spacing for the SOS search, in weeks.
pub const SOS_GRID_STEP: f64 = 0.01;
/// Width of the final golden-section bracket, in weeks.
pub const SOS_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error, PartialEq)]
pub enum PhenologyError {
    #[error("spring amplitude {c} is below {c_min}")]
    DegenerateFit { c: f64, c_min: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhenologyMetrics {
    pub plot_id: String,
    pub year: i32,
    pub sos: f64,
    pub pos: f64,
    pub peak: f64,
    pub qc_pass: bool,
}

pub fn passes_qc(fit: &SeasonFit) -> bool {
    passes_qc_at(fit, QC_MIN_R2)
}

pub fn passes_qc_at(fit: &SeasonFit, min_r2: f64) -> bool {
    fit.converged && fit.r2 >= min_r2
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}

/// Week of maximal spring-branch curvature on `[0, p]`.
///
/// The grid is anchored at `a1` rather than at 0 so that translating the
/// curve translates the grid with it.
pub fn estimate_sos(fit: &SeasonFit, c_min: f64) -> Result<f64, PhenologyError> {
    let params = &fit.params;
    if params.c < c_min {
        return Err(PhenologyError::DegenerateFit { c: params.c, c_min });
    }
    let (lo, hi) = (0.0, params.p.max(0.0));
    let k_lo = ((lo - params.a1) / SOS_GRID_STEP).ceil() as i64;
    let k_hi = ((hi - params.a1) / SOS_GRID_STEP).floor() as i64;
    let mut best_x = lo;
    let mut best_f = params.spring_curvature(lo);
    for k in k_lo..=k_hi {
        let x = params.a1 + k as f64 * SOS_GRID_STEP;
        let f = params.spring_curvature(x);
        if f > best_f {
            best_f = f;
            best_x = x;
        }
    }
    let f_hi = params.spring_curvature(hi);
    if f_hi > best_f {
        best_x = hi;
    }
    let bracket_lo = (best_x - SOS_GRID_STEP).max(lo);
    let bracket_hi = (best_x + SOS_GRID_STEP).min(hi);
    if bracket_hi - bracket_lo <= SOS_TOLERANCE {
        return Ok(best_x);
    }
    let refined = golden_max(
        |x| params.spring_curvature(x),
        bracket_lo,
        bracket_hi,
        SOS_TOLERANCE,
    );
    // never let refinement lose to the grid point it started from
    if params.spring_curvature(refined) >= params.spring_curvature(best_x) {
        Ok(refined)
    } else {
        Ok(best_x)
    }
}

pub fn estimate_pos(fit: &SeasonFit) -> f64 {
    fit.params.p
}

pub fn estimate_peak(fit: &SeasonFit) -> f64 {
    eval_double_logistic(&fit.params, fit.params.p)
}

/// All three landmarks plus the QC flag. A degenerate curve yields a NaN
/// SOS instead of an error so every fit still gets a row.
pub fn extract_metrics(fit: &SeasonFit, c_min: f64) -> PhenologyMetrics {
    extract_metrics_at(fit, c_min, QC_MIN_R2)
}

pub fn extract_metrics_at(fit: &SeasonFit, c_min: f64, min_r2: f64) -> PhenologyMetrics {
    PhenologyMetrics {
        plot_id: fit.plot_id.clone(),
        year: fit.year,
        sos: estimate_sos(fit, c_min).unwrap_or(f64::NAN),
        pos: estimate_pos(fit),
        peak: estimate_peak(fit),
        qc_pass: passes_qc_at(fit, min_r2),
    }
}

#[derive(Debug, Clone)]
pub struct QcOutcome {
    pub kept: Vec<SeasonFit>,
    pub excluded: Vec<SeasonFit>,
    pub exclusion_rate: f64,
}

pub fn apply_qc(fits: &[SeasonFit]) -> QcOutcome {
    apply_qc_at(fits, QC_MIN_R2)
}

pub fn apply_qc_at(fits: &[SeasonFit], min_r2: f64) -> QcOutcome {
    let (kept, excluded): (Vec<_>, Vec<_>) =
        fits.iter().cloned().partition(|f| passes_qc_at(f, min_r2));
    let exclusion_rate = if fits.is_empty() {
        0.0
    } else {
        excluded.len() as f64 / fits.len() as f64
    };
    QcOutcome {
        kept,
        excluded,
        exclusion_rate,
    }
}
