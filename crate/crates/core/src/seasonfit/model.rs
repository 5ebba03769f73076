use serde::{Deserialize, Serialize};

/// Names of the free parameters, in the order used by [`eval_jacobian`].
///
/// `a2` is not free: it follows from the continuity equation.
pub const FREE_PARAM_NAMES: [&str; 6] = ["a1", "b1", "b2", "c", "d", "p"];

/// Number of free parameters after eliminating `a2`.
pub const N_FREE: usize = 6;

/// Parameters of the piecewise double logistic NDVI curve.
///
/// For `x <= p` the curve is `c / (1 + exp(b1 (x - a1))) + d`; for `x > p` it
/// is `-c / (1 + exp(b2 (x - a2))) + d + c`. Both steepness values are
/// negative so the spring branch rises and the autumn branch falls. The
/// branches meet at `p` exactly when `b1 (p - a1) = -b2 (p - a2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoubleLogisticParams {
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub c: f64,
    pub d: f64,
    pub p: f64,
}

/// `1 / (1 + e^u)` without overflow.
#[inline]
pub(crate) fn logistic_down(u: f64) -> f64 {
    if u > 0.0 {
        let e = (-u).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + u.exp())
    }
}

/// `e^u / (1 + e^u)^2`, symmetric in `u`.
#[inline]
pub(crate) fn logistic_slope(u: f64) -> f64 {
    let e = (-u.abs()).exp();
    e / ((1.0 + e) * (1.0 + e))
}

impl DoubleLogisticParams {
    /// Builds parameters from the six free values, solving `a2` from the
    /// continuity equation.
    pub fn from_free(a1: f64, b1: f64, b2: f64, c: f64, d: f64, p: f64) -> Self {
        let a2 = p + (b1 / b2) * (p - a1);
        Self {
            a1,
            a2,
            b1,
            b2,
            c,
            d,
            p,
        }
    }

    pub fn from_free_slice(v: &[f64]) -> Self {
        Self::from_free(v[0], v[1], v[2], v[3], v[4], v[5])
    }

    pub fn free(&self) -> [f64; N_FREE] {
        [self.a1, self.b1, self.b2, self.c, self.d, self.p]
    }

    /// `|b1 (p - a1) + b2 (p - a2)|`; zero up to rounding for eliminated params.
    pub fn continuity_residual(&self) -> f64 {
        (self.b1 * (self.p - self.a1) + self.b2 * (self.p - self.a2)).abs()
    }

    /// Right-branch minus left-branch derivative at `p`.
    pub fn derivative_gap(&self) -> f64 {
        let left = -self.c * self.b1 * logistic_slope(self.b1 * (self.p - self.a1));
        let right = self.c * self.b2 * logistic_slope(self.b2 * (self.p - self.a2));
        right - left
    }

    /// Checks the sign, amplitude and ordering invariants.
    pub fn validate(&self) -> Result<(), String> {
        let all = [self.a1, self.a2, self.b1, self.b2, self.c, self.d, self.p];
        if all.iter().any(|v| !v.is_finite()) {
            return Err("non-finite parameter".into());
        }
        if !(self.b1 < 0.0 && self.b2 < 0.0) {
            return Err(format!(
                "steepness must be negative (b1={}, b2={})",
                self.b1, self.b2
            ));
        }
        if !(self.c >= 0.0) || self.d + self.c > 1.0 + 1e-9 || self.d < -1.0 {
            return Err(format!(
                "amplitude/baseline out of range (c={}, d={})",
                self.c, self.d
            ));
        }
        if !(self.a1 < self.p && self.p < self.a2) {
            return Err(format!(
                "need a1 < p < a2 (a1={}, p={}, a2={})",
                self.a1, self.p, self.a2
            ));
        }
        if self.continuity_residual() > 1e-9 {
            return Err("continuity constraint violated".into());
        }
        Ok(())
    }

    /// Spring branch value, defined for every `x`.
    pub fn spring(&self, x: f64) -> f64 {
        self.c * logistic_down(self.b1 * (x - self.a1)) + self.d
    }

    /// Autumn branch value, defined for every `x`.
    pub fn autumn(&self, x: f64) -> f64 {
        -self.c * logistic_down(self.b2 * (x - self.a2)) + self.d + self.c
    }

    /// Second derivative of the spring branch.
    pub fn spring_curvature(&self, x: f64) -> f64 {
        let u = self.b1 * (x - self.a1);
        // -c b1^2 e^u (1 - e^u) / (1 + e^u)^3, rewritten with e^{-|u|}
        let e = (-u.abs()).exp();
        let s = e / ((1.0 + e) * (1.0 + e));
        let tanh_half = (1.0 - e) / (1.0 + e);
        let sign = if u > 0.0 { -1.0 } else { 1.0 };
        -self.c * self.b1 * self.b1 * s * sign * tanh_half
    }

    /// Shifts every location parameter by `dx` weeks.
    pub fn shifted(&self, dx: f64) -> Self {
        Self {
            a1: self.a1 + dx,
            a2: self.a2 + dx,
            p: self.p + dx,
            ..*self
        }
    }
}

/// Evaluates the double logistic curve at week `x`.
pub fn eval_double_logistic(params: &DoubleLogisticParams, x: f64) -> f64 {
    if x <= params.p {
        params.spring(x)
    } else {
        params.autumn(x)
    }
}

/// Partial derivatives of the curve with respect to the free parameters
/// `[a1, b1, b2, c, d, p]`, with `a2` eliminated through continuity.
pub fn eval_jacobian(params: &DoubleLogisticParams, x: f64) -> [f64; N_FREE] {
    let DoubleLogisticParams {
        a1,
        a2,
        b1,
        b2,
        c,
        p,
        ..
    } = *params;
    if x <= p {
        let u = b1 * (x - a1);
        let s = logistic_slope(u);
        [
            c * s * b1,
            -c * s * (x - a1),
            0.0,
            logistic_down(u),
            1.0,
            0.0,
        ]
    } else {
        let v = b2 * (x - a2);
        let s = logistic_slope(v);
        [
            c * s * b1,
            -c * s * (p - a1),
            c * s * ((x - a2) + b1 * (p - a1) / b2),
            1.0 - logistic_down(v),
            1.0,
            -c * s * (b1 + b2),
        ]
    }
}

/// Gradient of [`DoubleLogisticParams::derivative_gap`] with respect to the
/// free parameters.
pub(crate) fn derivative_gap_gradient(params: &DoubleLogisticParams) -> [f64; N_FREE] {
    // With a2 eliminated the gap is c (b1 + b2) s(u), u = b1 (p - a1).
    let DoubleLogisticParams {
        a1, b1, b2, c, p, ..
    } = *params;
    let u = b1 * (p - a1);
    let s = logistic_slope(u);
    // ds/du = s (1 - e^u) / (1 + e^u) = -s tanh(u/2)
    let ds = -s * (0.5 * u).tanh();
    let k = c * (b1 + b2);
    [
        k * ds * (-b1),
        c * s + k * ds * (p - a1),
        c * s,
        (b1 + b2) * s,
        0.0,
        k * ds * b1,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> DoubleLogisticParams {
        DoubleLogisticParams::from_free(18.0, -1.0, -0.7, 0.6, 0.2, 26.0)
    }

    #[test]
    fn zero_amplitude_is_flat() {
        let p = DoubleLogisticParams {
            c: 0.0,
            ..example()
        };
        for x in [0.0, 10.0, 26.0, 40.0, 52.0] {
            assert_eq!(eval_double_logistic(&p, x), 0.2);
        }
    }

    #[test]
    fn branches_agree_at_peak() {
        let p = example();
        assert!((p.spring(p.p) - p.autumn(p.p)).abs() < 1e-9);
        assert!(p.continuity_residual() < 1e-12);
        p.validate().unwrap();
    }

    #[test]
    fn half_amplitude_at_spring_inflection() {
        assert!((eval_double_logistic(&example(), 18.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn baseline_partial_is_one() {
        let p = example();
        for x in [0.0, 17.0, 26.0, 31.0, 52.0] {
            assert_eq!(eval_jacobian(&p, x)[4], 1.0);
        }
    }

    #[test]
    fn saturated_evaluation_is_finite() {
        let p = DoubleLogisticParams::from_free(18.0, -10.0, -10.0, 0.6, 0.2, 26.0);
        for x in [0.0, 52.0] {
            assert!(eval_double_logistic(&p, x).is_finite());
            assert!(eval_jacobian(&p, x).iter().all(|v| v.is_finite()));
        }
        assert!((eval_double_logistic(&p, 0.0) - 0.2).abs() < 1e-12);
        assert!((eval_double_logistic(&p, 52.0) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn curvature_matches_closed_form() {
        let p = example();
        for x in [10.0, 16.5, 18.0, 19.3, 25.0] {
            let u: f64 = p.b1 * (x - p.a1);
            let e = u.exp();
            let expected = -p.c * p.b1 * p.b1 * e * (1.0 - e) / (1.0 + e).powi(3);
            assert!((p.spring_curvature(x) - expected).abs() < 1e-14, "x={x}");
        }
    }
}
