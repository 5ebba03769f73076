//! Extended-precision least-squares oracle: exact rational normal
//! equations and a quadrature t tail.

use num::{BigRational, ToPrimitive};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::function::gamma::ln_gamma;

pub fn q(v: f64) -> BigRational {
    BigRational::from_float(v).unwrap()
}

pub fn f(v: &BigRational) -> f64 {
    v.to_f64().unwrap()
}

/// Tanh-sinh quadrature of `g` over `[0, 1]`; `g` receives the point and
/// its distance to 1, kept separately to avoid cancellation.
fn tanh_sinh(g: impl Fn(f64, f64) -> f64) -> f64 {
    let h = 1.0 / 256.0;
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut sum = 0.0;
    let n = (4.5 / h) as i64;
    for k in -n..=n {
        let t = k as f64 * h;
        let s = half_pi * t.sinh();
        let (cs, w) = (s.cosh(), half_pi * t.cosh());
        let weight = w / (cs * cs);
        // u = tanh(s) mapped to [0, 1]: x = (1 + u) / 2, 1 - x = (1 - u) / 2
        let e = (-2.0 * s.abs()).exp();
        let small = e / (1.0 + e);
        let (x, one_minus_x) = if s >= 0.0 {
            (1.0 - small, small)
        } else {
            (small, 1.0 - small)
        };
        if x <= 0.0 || one_minus_x <= 0.0 {
            continue;
        }
        sum += 0.5 * weight * g(x, one_minus_x);
    }
    sum * h
}

/// Regularized incomplete beta `I_x(a, b)` by direct integration of the
/// beta density.
fn beta_reg(x: f64, a: f64, b: f64) -> f64 {
    let ln_b = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
    let integral = tanh_sinh(|u, one_minus_u| {
        let w = x * u;
        let one_minus_w = if x == 1.0 { one_minus_u } else { 1.0 - w };
        ((a - 1.0) * w.ln() + (b - 1.0) * one_minus_w.ln() - ln_b).exp()
    });
    x * integral
}

/// Two-sided Student-t p-value from `t^2` given exactly.
pub fn p_two_sided(t2: &BigRational, df: u64) -> f64 {
    let nu = BigRational::from_integer(df.into());
    let x = &nu / (&nu + t2);
    let one_minus_x = t2 / (&nu + t2);
    let (a, b) = (df as f64 / 2.0, 0.5);
    // integrate whichever tail is small so the result keeps full relative
    // precision
    let direct = beta_reg(f(&x), a, b);
    if direct <= 0.5 {
        direct
    } else {
        1.0 - beta_reg(f(&one_minus_x), b, a)
    }
}

pub struct Oracle {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    pub r2: f64,
    pub p_slope: f64,
    pub p_intercept: f64,
}

pub fn oracle(x: &[f64], y: &[f64]) -> Oracle {
    let n = BigRational::from_integer(x.len().into());
    let xs: Vec<BigRational> = x.iter().map(|&v| q(v)).collect();
    let ys: Vec<BigRational> = y.iter().map(|&v| q(v)).collect();
    let sx: BigRational = xs.iter().sum();
    let sy: BigRational = ys.iter().sum();
    let sxx: BigRational = xs.iter().map(|v| v * v).sum();
    let sxy: BigRational = xs.iter().zip(&ys).map(|(a, b)| a * b).sum();
    let syy: BigRational = ys.iter().map(|v| v * v).sum();
    let cxx = &sxx - &sx * &sx / &n;
    let cxy = &sxy - &sx * &sy / &n;
    let cyy = &syy - &sy * &sy / &n;
    let slope = &cxy / &cxx;
    let intercept = (&sy - &slope * &sx) / &n;
    let ss_res = &cyy - &cxy * &cxy / &cxx;
    let df = x.len() as u64 - 2;
    let sigma2 = &ss_res / BigRational::from_integer(df.into());
    let var_slope = &sigma2 / &cxx;
    let xbar = &sx / &n;
    let var_intercept = &sigma2 * (BigRational::from_integer(1.into()) / &n + &xbar * &xbar / &cxx);
    let r2 = &cxy * &cxy / (&cxx * &cyy);
    let t2_slope = &slope * &slope / &var_slope;
    let t2_intercept = &intercept * &intercept / &var_intercept;
    Oracle {
        slope: f(&slope),
        intercept: f(&intercept),
        slope_se: f(&var_slope).sqrt(),
        intercept_se: f(&var_intercept).sqrt(),
        r2: f(&r2),
        p_slope: p_two_sided(&t2_slope, df),
        p_intercept: p_two_sided(&t2_intercept, df),
    }
}

pub fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let x0 = rng.random_range(-5.0..15.0);
    let spread = rng.random_range(0.5..8.0);
    let slope = rng.random_range(-1.0..1.0);
    let intercept = rng.random_range(-30.0..30.0);
    let sd = rng.random_range(0.05..4.0);
    let x: Vec<f64> = (0..n).map(|_| x0 + spread * rng.random::<f64>()).collect();
    let y = x
        .iter()
        .map(|&xi| intercept + slope * xi + sd * normal.sample(rng))
        .collect();
    (x, y)
}
