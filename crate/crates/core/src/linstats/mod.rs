//! Ordinary least squares with t-test inference, Pearson correlation and
//! week/day unit conversions.

pub mod special;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use special::{beta_inc, ln_gamma, student_t_cdf, student_t_two_sided};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("x and y lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("predictor is constant")]
    ConstantPredictor,
    #[error("series is constant")]
    ConstantSeries,
    #[error("slope is zero")]
    ZeroSlope,
    #[error("non-finite input")]
    NonFinite,
}

/// Simple linear regression `y = intercept + slope * x` with t-test
/// p-values for both coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinRegResult {
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
    pub intercept_se: f64,
    pub r2: f64,
    pub p_slope: f64,
    pub p_intercept: f64,
    pub n: usize,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn two_sided_p(estimate: f64, se: f64, df: f64) -> f64 {
    let t = if se > 0.0 {
        estimate / se
    } else if estimate == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    student_t_two_sided(t, df)
}

/// Fits `y` on `x` by closed-form least squares.
///
/// Standard errors use the residual variance with `n - 2` degrees of
/// freedom. A constant response gives `r2 = 0`. A coefficient with zero
/// standard error gets p = 0, or p = 1 when the coefficient is itself zero.
pub fn ols_fit(x: &[f64], y: &[f64]) -> Result<LinRegResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::TooFewPoints { needed: 3, got: n });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (xi, yi) in x.iter().zip(y) {
        let (dx, dy) = (xi - mx, yi - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(StatsError::ConstantPredictor);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| {
            let e = yi - intercept - slope * xi;
            e * e
        })
        .sum();
    let df = (n - 2) as f64;
    let sigma2 = ss_res / df;
    let slope_se = (sigma2 / sxx).sqrt();
    let intercept_se = (sigma2 * (1.0 / n as f64 + mx * mx / sxx)).sqrt();
    let r2 = if syy > 0.0 {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Ok(LinRegResult {
        slope,
        slope_se,
        intercept,
        intercept_se,
        r2,
        p_slope: two_sided_p(slope, slope_se, df),
        p_intercept: two_sided_p(intercept, intercept_se, df),
        n,
    })
}

/// Product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatsError::TooFewPoints {
            needed: 2,
            got: x.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (xi, yi) in x.iter().zip(y) {
        let (dx, dy) = (xi - mx, yi - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ConstantSeries);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// A slope in weeks/°C expressed as days/°C and as °C of warming per week
/// of shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftRates {
    pub days_per_degc: f64,
    pub degc_per_week: f64,
}

pub fn weeks_per_degc_to_days(slope: f64) -> f64 {
    7.0 * slope
}

pub fn degc_per_week(slope: f64) -> Result<f64, StatsError> {
    if slope == 0.0 {
        return Err(StatsError::ZeroSlope);
    }
    Ok(1.0 / slope.abs())
}

pub fn shift_rates(slope: f64) -> Result<ShiftRates, StatsError> {
    Ok(ShiftRates {
        days_per_degc: weeks_per_degc_to_days(slope),
        degc_per_week: degc_per_week(slope)?,
    })
}

pub const LINREG_HEADER: [&str; 9] = [
    "target",
    "slope",
    "slope_se",
    "intercept",
    "intercept_se",
    "r2",
    "p_slope",
    "p_intercept",
    "n",
];

pub fn write_linreg<W: std::io::Write>(
    w: W,
    rows: &[(String, LinRegResult)],
) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(LINREG_HEADER)?;
    for (target, r) in rows {
        let mut rec = vec![target.clone()];
        rec.extend(
            [
                r.slope,
                r.slope_se,
                r.intercept,
                r.intercept_se,
                r.r2,
                r.p_slope,
                r.p_intercept,
            ]
            .iter()
            .map(f64::to_string),
        );
        rec.push(r.n.to_string());
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct LinRegRow {
    target: String,
    slope: f64,
    slope_se: f64,
    intercept: f64,
    intercept_se: f64,
    r2: f64,
    p_slope: f64,
    p_intercept: f64,
    n: usize,
}

pub fn read_linreg<R: std::io::Read>(
    r: R,
) -> Result<Vec<(String, LinRegResult)>, crate::data::DataError> {
    let rows: Vec<LinRegRow> = crate::data::read_rows(r, &LINREG_HEADER)?;
    Ok(rows
        .into_iter()
        .map(|r| {
            let fit = LinRegResult {
                slope: r.slope,
                slope_se: r.slope_se,
                intercept: r.intercept,
                intercept_se: r.intercept_se,
                r2: r.r2,
                p_slope: r.p_slope,
                p_intercept: r.p_intercept,
                n: r.n,
            };
            (r.target, fit)
        })
        .collect())
}

/// Rounds half away from zero to `decimals` places, for reports.
pub fn round_to(value: f64, decimals: u32) -> f64 {
    let f = 10f64.powi(decimals as i32);
    (value * f).round() / f
}
