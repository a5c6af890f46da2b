//! The logarithmic double-well potential, its regularized family and the
//! C² bound functionals.
//!
//! The unregularized potential is
//!
//! ```text
//! F(x) = (1+x) ln(1+x) + (1-x) ln(1-x) - c x^2,   x in [-1, 1],
//! ```
//!
//! whose derivative is singular at x = ±1. The regularized family replaces the
//! logarithms by globally smooth terms controlled by a scale `delta`:
//!
//! ```text
//! F_d(x) = 1/2 (x+1) ln((x+1)^2 + d) + sqrt(d) atan((x+1)/sqrt(d))
//!        - 1/2 (x-1) ln((x-1)^2 + d) - sqrt(d) atan((x-1)/sqrt(d)) - c x^2
//! F_d'(x)  = 1/2 ln((x+1)^2 + d) - 1/2 ln((x-1)^2 + d) - 2 c x
//! F_d''(x) = (2 (1-x^2) + 2 d) / (((1+x)^2 + d) ((1-x)^2 + d)) - 2 c
//! ```
//!
//! `F_d` is even, `F_d'` odd and globally bounded (by roughly `ln(1/d)`), and
//! `F_d -> F` pointwise on (-1, 1) as `d -> 0`. The raw antiderivative carries
//! two `-x` terms that cancel identically; we implement the cancelled form.
//!
//! The splitting used by the semi-implicit scheme treats the quadratic well
//! `-c x^2` implicitly and the logarithmic remainder explicitly:
//! `F_d = F_d1 + F_d2` with `F_d2 = -c x^2`, so `F_d1' = F_d' + 2 c x` is the
//! pure (bounded) logarithmic part.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Parameters of the regularized potential: regularization scale and well depth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialParams {
    /// Regularization scale `delta >= 0`. `delta = 0` recovers the singular
    /// potential, defined only on [-1, 1]. Values below ~1e-18 simply behave
    /// like 1e-18 near x = ±1 in double precision; no special-casing.
    pub delta: f64,
    /// Quadratic well coefficient `c >= 0`.
    pub c: f64,
}

impl PotentialParams {
    pub fn new(delta: f64, c: f64) -> Result<Self> {
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::Config(format!("delta must be finite and >= 0, got {delta}")));
        }
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::Config(format!("c must be finite and >= 0, got {c}")));
        }
        Ok(Self { delta, c })
    }
}

/// Smoothing width of the C² bound functionals `f1`, `f2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundFunctionalParams {
    pub kappa: f64,
}

impl BoundFunctionalParams {
    pub fn new(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::Config(format!("kappa must be finite and > 0, got {kappa}")));
        }
        Ok(Self { kappa })
    }
}

/// x ln x extended by continuity with 0 ln 0 = 0.
fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// The singular logarithmic potential `F(x)`, defined for |x| <= 1
/// (endpoints by continuous extension).
pub fn eval_flog(xi: f64, c: f64) -> Result<f64> {
    if !(xi.abs() <= 1.0) {
        return Err(Error::Domain(format!("eval_flog: |xi| <= 1 required, got {xi}")));
    }
    Ok(xlogx(1.0 + xi) + xlogx(1.0 - xi) - c * xi * xi)
}

/// The regularized potential `F_d(x)`, defined for all real x when
/// `delta > 0`; falls back to [`eval_flog`] when `delta = 0`.
pub fn eval_flog_delta(xi: f64, p: &PotentialParams) -> Result<f64> {
    if p.delta == 0.0 {
        return eval_flog(xi, p.c);
    }
    Ok(flog_delta_raw(xi, p.delta, p.c))
}

pub(crate) fn flog_delta_raw(xi: f64, delta: f64, c: f64) -> f64 {
    let sd = delta.sqrt();
    let up = xi + 1.0;
    let dn = xi - 1.0;
    0.5 * up * (up * up + delta).ln() + sd * (up / sd).atan()
        - (0.5 * dn * (dn * dn + delta).ln() + sd * (dn / sd).atan())
        - c * xi * xi
}

/// Total version for hot loops: NaN instead of a domain error when
/// `delta = 0` and |x| > 1.
pub(crate) fn flog_delta_total(xi: f64, delta: f64, c: f64) -> f64 {
    if delta == 0.0 {
        if xi.abs() <= 1.0 {
            xlogx(1.0 + xi) + xlogx(1.0 - xi) - c * xi * xi
        } else {
            f64::NAN
        }
    } else {
        flog_delta_raw(xi, delta, c)
    }
}

/// First derivative `F_d'(x)`.
pub fn eval_flog_delta_prime(xi: f64, p: &PotentialParams) -> Result<f64> {
    if p.delta == 0.0 && !(xi.abs() <= 1.0) {
        return Err(Error::Domain(format!(
            "eval_flog_delta_prime: delta = 0 requires |xi| <= 1, got {xi}"
        )));
    }
    Ok(flog_delta_prime_raw(xi, p.delta, p.c))
}

pub(crate) fn flog_delta_prime_raw(xi: f64, delta: f64, c: f64) -> f64 {
    flog1_prime_raw(xi, delta) - 2.0 * c * xi
}

/// Second derivative `F_d''(x)`; requires `delta > 0` (unbounded near ±1
/// otherwise).
pub fn eval_flog_delta_second(xi: f64, p: &PotentialParams) -> Result<f64> {
    if p.delta == 0.0 {
        return Err(Error::Domain(
            "eval_flog_delta_second: delta > 0 required".to_string(),
        ));
    }
    Ok(flog_delta_second_raw(xi, p.delta, p.c))
}

pub(crate) fn flog_delta_second_raw(xi: f64, delta: f64, c: f64) -> f64 {
    let up = 1.0 + xi;
    let dn = 1.0 - xi;
    (2.0 * (1.0 - xi * xi) + 2.0 * delta) / ((up * up + delta) * (dn * dn + delta)) - 2.0 * c
}

/// Derivative of the explicit (logarithmic) part of the splitting:
/// `F_d1'(x) = F_d'(x) + 2 c x = 1/2 ln((x+1)^2 + d) - 1/2 ln((x-1)^2 + d)`.
///
/// Odd, and globally bounded: the supremum is `ln(1 + sqrt(1+d)) - ln(d)/2`,
/// attained at x = ±sqrt(1+d), a shade above `ln((4+d)/d)/2`.
pub fn eval_flog1_prime(xi: f64, p: &PotentialParams) -> Result<f64> {
    if p.delta == 0.0 && !(xi.abs() <= 1.0) {
        return Err(Error::Domain(format!(
            "eval_flog1_prime: delta = 0 requires |xi| <= 1, got {xi}"
        )));
    }
    Ok(flog1_prime_raw(xi, p.delta))
}

pub(crate) fn flog1_prime_raw(xi: f64, delta: f64) -> f64 {
    let up = xi + 1.0;
    let dn = xi - 1.0;
    0.5 * (up * up + delta).ln() - 0.5 * (dn * dn + delta).ln()
}

/// Piecewise-quintic C² regularization of the upper bound functional:
/// `f1(x) = x - 1` beyond `1 + kappa`, `0` below `1`, quintic blend between.
pub fn eval_f1_kappa(xi: f64, b: &BoundFunctionalParams) -> f64 {
    let k = b.kappa;
    let s = 1.0 - xi;
    if s < -k {
        xi - 1.0
    } else if s < 0.0 {
        let (k2, k3, k4) = (k * k, k * k * k, k * k * k * k);
        let (s3, s4, s5) = (s * s * s, s * s * s * s, s * s * s * s * s);
        -3.0 / k4 * s5 - 8.0 / k3 * s4 - 6.0 / k2 * s3
    } else {
        0.0
    }
}

/// Mirrored lower bound functional, `f2(x) = f1(-x)`.
pub fn eval_f2_kappa(xi: f64, b: &BoundFunctionalParams) -> f64 {
    eval_f1_kappa(-xi, b)
}
