//! Laplace exponents of multivariate noise and of its projections.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::measure::LevyMeasure1D;
use crate::model::{GFunction, LevyModel};
use crate::quad::Tolerance;

const POSITIVITY_TOL: f64 = 1e-12;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn laplace_exponent_1d(rho: &LevyMeasure1D, b: f64) -> Result<f64> {
    rho.laplace(b)
}

/// `J_Z(lam) = <Q lam, lam>/2 + int (e^{-<lam,y>} - 1 + <lam,y>) nu(dy)`.
pub fn laplace_exponent_multi(model: &LevyModel, lam: &[f64]) -> Result<f64> {
    laplace_exponent_multi_with(model, lam, Tolerance::default())
}

pub fn laplace_exponent_multi_with(model: &LevyModel, lam: &[f64], tol: Tolerance) -> Result<f64> {
    let mut j = 0.5 * model.q_form(lam, lam);
    for ray in model.rays() {
        let s = dot(lam, ray.direction);
        if s != 0.0 {
            j += ray.weight * ray.measure.laplace_with(s, tol)?;
        }
    }
    Ok(j)
}

/// Laplace exponent of the projection `<g, Z>` at `b`.
pub fn projection_laplace(model: &LevyModel, g: &[f64], b: f64) -> Result<f64> {
    projection_laplace_with(model, g, b, Tolerance::default())
}

pub fn projection_laplace_with(model: &LevyModel, g: &[f64], b: f64, tol: Tolerance) -> Result<f64> {
    let lam: Vec<f64> = g.iter().map(|v| v * b).collect();
    laplace_exponent_multi_with(model, &lam, tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpSupportReport {
    pub all_nonneg: bool,
    pub min_inner: f64,
}

/// Whether every jump of `<g, Z>` is nonnegative.
pub fn check_jump_support(model: &LevyModel, g: &[f64]) -> JumpSupportReport {
    let gn = norm(g);
    let mut min_inner = f64::INFINITY;
    let mut all_nonneg = true;
    for ray in model.rays() {
        let yn = norm(ray.direction);
        let inner = dot(g, ray.direction);
        if inner < -POSITIVITY_TOL * gn * yn {
            all_nonneg = false;
        }
        let normalized = if gn == 0.0 { 0.0 } else { inner / (gn * yn) };
        min_inner = min_inner.min(normalized);
    }
    if !min_inner.is_finite() {
        min_inner = 0.0;
    }
    JumpSupportReport { all_nonneg, min_inner }
}

/// `x + <G(x), y> >= 0` for every `y` in the jump support.
pub fn appendix_support_bound(model: &LevyModel, gfun: &GFunction, x: f64) -> bool {
    let g = gfun.eval(x);
    model.rays().iter().all(|ray| {
        let s = dot(&g, ray.direction);
        if s >= 0.0 {
            return true;
        }
        let r_max = ray.measure.support_sup();
        r_max.is_finite() && x + s * r_max >= -POSITIVITY_TOL
    })
}

/// Implied martingale drift `a = -int_{|y|>1} y nu(dy)`.
pub fn drift_vector(model: &LevyModel) -> Result<Vec<f64>> {
    let mut a = vec![0.0; model.dim()];
    for ray in model.rays() {
        let n = norm(ray.direction);
        let m = ray.weight * ray.measure.tail_first_moment(1.0 / n)?;
        for (ai, di) in a.iter_mut().zip(ray.direction) {
            *ai -= m * di;
        }
    }
    Ok(a)
}
