//! Bounded nonlinear least squares by a trust-region reflective method.
//!
//! The solver minimises `F(x) = ||r(x)||^2` over a box. Iterates stay
//! strictly inside the box. Each iteration scales the variables by the
//! Coleman-Li distance-to-bound vector, takes a dogleg step in the scaled
//! trust region, and reflects the step off any bound it would cross. A
//! problem may also veto trial points through [`LeastSquaresProblem::is_feasible`],
//! which is treated like a failed step.

use nalgebra::{DMatrix, DVector};

pub trait LeastSquaresProblem {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    fn residuals(&self, x: &[f64], out: &mut [f64]);
    /// Row-major `n_residuals x n_params` Jacobian of the residuals.
    fn jacobian(&self, x: &[f64], out: &mut DMatrix<f64>);
    fn is_feasible(&self, _x: &[f64]) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    /// Moves `x` strictly inside the box.
    pub fn make_interior(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            let (lo, hi) = (self.lower[i], self.upper[i]);
            let margin = 1e-10 * (hi - lo).max(1.0);
            *v = v.clamp(lo + margin, hi - margin);
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrfOptions {
    pub ftol: f64,
    pub gtol: f64,
    pub xtol: f64,
    pub max_iter: usize,
}

impl Default for TrfOptions {
    fn default() -> Self {
        Self {
            ftol: 1e-8,
            gtol: 1e-8,
            xtol: 1e-10,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Scaled gradient below `gtol`.
    Gradient,
    /// Step below `xtol` relative to `x`.
    Step,
    /// Accepted decrease below `ftol` relative to the objective.
    Function,
    MaxIterations,
    /// Objective or model became non-finite.
    NonFinite,
}

impl Termination {
    pub fn converged(self) -> bool {
        matches!(
            self,
            Termination::Gradient | Termination::Step | Termination::Function
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrfReport {
    pub x: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// Objective after every accepted step, starting with the initial point.
    pub cost_history: Vec<f64>,
    /// Every accepted iterate, starting with the initial point.
    pub iterates: Vec<Vec<f64>>,
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Coleman-Li scaling `v` and its derivative sign `dv`: distance to the
/// bound the negative gradient points at.
fn scaling(x: &[f64], g: &DVector<f64>, bounds: &Bounds) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![1.0; x.len()];
    let mut dv = vec![0.0; x.len()];
    for (i, &xi) in x.iter().enumerate() {
        if g[i] < 0.0 && bounds.upper[i].is_finite() {
            v[i] = bounds.upper[i] - xi;
            dv[i] = -1.0;
        } else if g[i] > 0.0 && bounds.lower[i].is_finite() {
            v[i] = xi - bounds.lower[i];
            dv[i] = 1.0;
        }
    }
    (v, dv)
}

/// Minimum-norm Gauss-Newton step `argmin ||J s + r||`.
fn gauss_newton(j: &DMatrix<f64>, r: &DVector<f64>) -> Option<DVector<f64>> {
    let svd = j.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if !(smax > 0.0) {
        return None;
    }
    let eps = smax * 1e-12 * j.nrows().max(j.ncols()) as f64;
    let neg_r = -r;
    svd.solve(&neg_r, eps).ok()
}

/// Quadratic model in scaled space, `||r + J s||^2 + s' diag(h) s`.
struct ScaledModel<'a> {
    jh: &'a DMatrix<f64>,
    r: &'a DVector<f64>,
    diag: &'a [f64],
}

impl ScaledModel<'_> {
    fn value(&self, s: &DVector<f64>) -> f64 {
        let reg: f64 = s.iter().zip(self.diag).map(|(si, h)| h * si * si).sum();
        (self.r + self.jh * s).norm_squared() + reg
    }

    fn gradient(&self) -> DVector<f64> {
        self.jh.transpose() * self.r
    }

    /// Curvature `s' (J'J + diag(h)) s`.
    fn curvature(&self, s: &DVector<f64>) -> f64 {
        (self.jh * s).norm_squared()
            + s.iter()
                .zip(self.diag)
                .map(|(si, h)| h * si * si)
                .sum::<f64>()
    }

    /// Minimiser of the model along `dir` for `t` in `[0, t_max]`.
    fn line_min(&self, dir: &DVector<f64>, t_max: f64) -> f64 {
        let slope = 2.0 * self.gradient().dot(dir);
        let curv = 2.0 * self.curvature(dir);
        let t = if curv > 0.0 {
            -slope / curv
        } else if slope < 0.0 {
            t_max
        } else {
            0.0
        };
        t.clamp(0.0, t_max)
    }
}

/// Powell dogleg step on the augmented scaled system.
fn dogleg(model: &ScaledModel<'_>, radius: f64) -> DVector<f64> {
    let n = model.jh.ncols();
    let m = model.jh.nrows();
    let mut aug = DMatrix::zeros(m + n, n);
    aug.view_mut((0, 0), (m, n)).copy_from(model.jh);
    for (i, h) in model.diag.iter().enumerate() {
        aug[(m + i, i)] = h.sqrt();
    }
    let mut raug = DVector::zeros(m + n);
    raug.rows_mut(0, m).copy_from(model.r);

    let gh = model.gradient();
    let gn = gauss_newton(&aug, &raug);
    if let Some(gn) = &gn {
        if gn.norm() <= radius {
            return gn.clone();
        }
    }
    let denom = model.curvature(&gh);
    let t = if denom > 0.0 {
        gh.norm_squared() / denom
    } else {
        0.0
    };
    let cauchy = -&gh * t;
    let cn = cauchy.norm();
    if cn >= radius || gn.is_none() {
        let gnorm = gh.norm();
        return if gnorm > 0.0 {
            -&gh * (radius / gnorm)
        } else {
            DVector::zeros(n)
        };
    }
    let gn = gn.unwrap();
    // walk from the Cauchy point towards the Gauss-Newton point to the boundary
    let d = &gn - &cauchy;
    let a = d.norm_squared();
    let b = 2.0 * cauchy.dot(&d);
    let c = cn * cn - radius * radius;
    let tau = if a > 0.0 {
        (-b + (b * b - 4.0 * a * c).max(0.0).sqrt()) / (2.0 * a)
    } else {
        0.0
    };
    cauchy + d * tau.clamp(0.0, 1.0)
}

/// Largest `t >= 0` such that `x + t s` stays inside `[lo, hi]`, and the
/// indices of the bounds that limit it.
fn step_to_bound(x: &[f64], s: &DVector<f64>, lo: &[f64], hi: &[f64]) -> (f64, Vec<usize>) {
    let mut t = f64::INFINITY;
    let mut hits = Vec::new();
    for i in 0..x.len() {
        let ti = if s[i] > 0.0 {
            (hi[i] - x[i]) / s[i]
        } else if s[i] < 0.0 {
            (lo[i] - x[i]) / s[i]
        } else {
            continue;
        };
        if ti < t {
            t = ti;
            hits.clear();
            hits.push(i);
        } else if ti == t {
            hits.push(i);
        }
    }
    (t, hits)
}

/// Turns a scaled trust-region step into one that keeps the iterate strictly
/// feasible. Candidates are the step truncated at the bound, the step
/// reflected off it, and the best point along the scaled negative gradient;
/// the one with the lowest model value wins. Everything here is in scaled
/// coordinates, with `lo`/`hi` the box relative to the current iterate.
fn select_step(
    model: &ScaledModel<'_>,
    sh: DVector<f64>,
    lo: &[f64],
    hi: &[f64],
    radius: f64,
    theta: f64,
) -> DVector<f64> {
    let n = sh.len();
    let origin = vec![0.0; n];
    let (t_hit, hits) = step_to_bound(&origin, &sh, lo, hi);
    if t_hit > 1.0 {
        return sh;
    }
    let truncated = &sh * (theta * t_hit);
    let mut best = truncated.clone();
    let mut best_val = model.value(&truncated);

    let mut reflected_dir = sh.clone();
    for &i in &hits {
        reflected_dir[i] = -reflected_dir[i];
    }
    let hit = &sh * t_hit;
    // stay inside the trust region: |hit + t dir| <= radius
    let a = reflected_dir.norm_squared();
    let b = 2.0 * hit.dot(&reflected_dir);
    let c = hit.norm_squared() - radius * radius;
    let t_radius = if a > 0.0 {
        (-b + (b * b - 4.0 * a * c).max(0.0).sqrt()) / (2.0 * a)
    } else {
        0.0
    };
    let hit_slice: Vec<f64> = hit.iter().copied().collect();
    let (t_box, _) = step_to_bound(&hit_slice, &reflected_dir, lo, hi);
    let t_max = t_radius.min(theta * t_box).max(0.0);
    if t_max > 0.0 {
        // minimise along the reflected ray, starting just past the bound
        let base_r = model.r + model.jh * &hit;
        let reg: f64 = hit
            .iter()
            .zip(reflected_dir.iter())
            .zip(model.diag)
            .map(|((h, d), w)| w * h * d)
            .sum();
        let slope = 2.0 * ((model.jh * &reflected_dir).dot(&base_r) + reg);
        let curv = 2.0 * model.curvature(&reflected_dir);
        let t_lo = (1.0 - theta) * t_max;
        let t = if curv > 0.0 { -slope / curv } else { t_max };
        let t = t.clamp(t_lo, theta * t_max);
        let cand = &hit + &reflected_dir * t;
        let val = model.value(&cand);
        if val < best_val {
            best = cand;
            best_val = val;
        }
    }

    let g = model.gradient();
    let gnorm = g.norm();
    if gnorm > 0.0 {
        let dir = -&g;
        let (t_box, _) = step_to_bound(&origin, &dir, lo, hi);
        let t_max = (radius / gnorm).min(theta * t_box);
        let t = model.line_min(&dir, t_max);
        let cand = dir * t;
        if model.value(&cand) < best_val {
            best = cand;
        }
    }
    best
}

fn strictly_inside(x: &[f64], bounds: &Bounds) -> bool {
    x.iter()
        .zip(bounds.lower.iter().zip(&bounds.upper))
        .all(|(v, (lo, hi))| *v > *lo && *v < *hi)
}

/// Runs the trust-region reflective iteration from `x0`.
pub fn minimize<P: LeastSquaresProblem>(
    problem: &P,
    x0: &[f64],
    bounds: &Bounds,
    opts: &TrfOptions,
) -> TrfReport {
    let n = problem.n_params();
    let m = problem.n_residuals();
    let mut x = x0.to_vec();
    bounds.make_interior(&mut x);

    let mut r = vec![0.0; m];
    let mut j = DMatrix::zeros(m, n);
    problem.residuals(&x, &mut r);
    let mut cost = sum_sq(&r);
    let mut history = vec![cost];
    let mut iterates = vec![x.clone()];
    if !cost.is_finite() {
        return TrfReport {
            x,
            cost,
            iterations: 0,
            termination: Termination::NonFinite,
            cost_history: history,
            iterates,
        };
    }
    problem.jacobian(&x, &mut j);

    let mut radius = f64::NAN;
    let mut trial_r = vec![0.0; m];
    let mut iter = 0;
    let termination = loop {
        if iter >= opts.max_iter {
            break Termination::MaxIterations;
        }
        let rv = DVector::from_column_slice(&r);
        let g = j.transpose() * &rv;
        let (v, dv) = scaling(&x, &g, bounds);
        let scaled_g_norm = g
            .iter()
            .zip(&v)
            .map(|(gi, vi)| (gi * vi).abs())
            .fold(0.0, f64::max);
        if scaled_g_norm < opts.gtol {
            break Termination::Gradient;
        }
        let d: Vec<f64> = v.iter().map(|vi| vi.sqrt()).collect();
        let diag: Vec<f64> = g.iter().zip(&dv).map(|(gi, dvi)| gi * dvi).collect();
        let mut jh = j.clone();
        for (col, di) in d.iter().enumerate() {
            jh.column_mut(col).scale_mut(*di);
        }
        let lo: Vec<f64> = (0..n).map(|i| (bounds.lower[i] - x[i]) / d[i]).collect();
        let hi: Vec<f64> = (0..n).map(|i| (bounds.upper[i] - x[i]) / d[i]).collect();
        if radius.is_nan() {
            let x_scaled_norm: f64 = x
                .iter()
                .zip(&d)
                .map(|(xi, di)| (xi / di).powi(2))
                .sum::<f64>()
                .sqrt();
            radius = if x_scaled_norm > 0.0 {
                x_scaled_norm
            } else {
                1.0
            };
        }
        let theta = (1.0 - scaled_g_norm).max(0.995);
        let model = ScaledModel {
            jh: &jh,
            r: &rv,
            diag: &diag,
        };

        // inner loop: shrink until a step is accepted or the step is negligible
        let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut accepted = false;
        let mut tiny_step = false;
        let mut flat = false;
        let mut non_finite = false;
        while !accepted {
            iter += 1;
            let sh = dogleg(&model, radius);
            let sh = select_step(&model, sh, &lo, &hi, radius, theta);
            let step: DVector<f64> =
                DVector::from_iterator(n, sh.iter().zip(&d).map(|(s, di)| s * di));
            let step_norm = step.norm();
            if step_norm <= opts.xtol * (opts.xtol + x_norm) {
                tiny_step = true;
                break;
            }
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let predicted = cost - model.value(&sh);
            let mut actual = f64::NEG_INFINITY;
            let mut trial_cost = f64::INFINITY;
            if strictly_inside(&trial, bounds) && problem.is_feasible(&trial) {
                problem.residuals(&trial, &mut trial_r);
                trial_cost = sum_sq(&trial_r);
                if trial_cost.is_finite() {
                    actual = cost - trial_cost;
                }
            }
            let ratio = if predicted > 0.0 {
                actual / predicted
            } else {
                f64::NEG_INFINITY
            };
            let sh_norm = sh.norm();
            if ratio < 0.25 {
                radius = 0.25 * sh_norm.min(radius);
            } else if ratio > 0.75 && sh_norm >= 0.95 * radius {
                radius *= 2.0;
            }
            if actual > 0.0 && ratio > 1e-4 {
                if ratio > 0.25 && actual < opts.ftol * cost {
                    flat = true;
                }
                x = trial;
                std::mem::swap(&mut r, &mut trial_r);
                cost = trial_cost;
                history.push(cost);
                iterates.push(x.clone());
                problem.jacobian(&x, &mut j);
                if j.iter().any(|v| !v.is_finite()) {
                    non_finite = true;
                }
                accepted = true;
                if step_norm <= opts.xtol * (opts.xtol + x_norm) {
                    tiny_step = true;
                }
            }
            if !radius.is_finite() || radius <= 0.0 {
                tiny_step = true;
                break;
            }
            if iter >= opts.max_iter {
                break;
            }
        }
        if non_finite {
            break Termination::NonFinite;
        }
        if tiny_step {
            break Termination::Step;
        }
        if flat {
            break Termination::Function;
        }
    };
    TrfReport {
        x,
        cost,
        iterations: iter,
        termination,
        cost_history: history,
        iterates,
    }
}
