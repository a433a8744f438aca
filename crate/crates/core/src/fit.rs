//! Fitting `y(b) = sum_k eta_k b^{alpha_k}` with `alpha_k` in `(1, 2]`.
//!
//! Variable projection: for fixed exponents the weights solve a linear least
//! squares problem in relative residuals; the exponents are refined by a
//! projected Levenberg-Marquardt iteration started from a coarse scan and from
//! the end slopes of the log-log curve.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ALPHA_MIN: f64 = 1.0 + 1e-9;
pub const ALPHA_MAX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerTerm {
    pub alpha: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSumFit {
    /// Sorted by `alpha` descending.
    pub terms: Vec<PowerTerm>,
    /// Largest relative deviation `|fit - y| / y` over the samples.
    pub residual: f64,
}

impl PowerSumFit {
    pub fn eval(&self, b: f64) -> f64 {
        self.terms.iter().map(|t| t.eta * b.powf(t.alpha)).sum()
    }
}

struct Problem<'a> {
    lb: Vec<f64>,
    y: &'a [f64],
}

impl Problem<'_> {
    /// Weights and relative residuals for fixed exponents.
    fn project(&self, alphas: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = self.y.len();
        let g = alphas.len();
        let a = DMatrix::from_fn(n, g, |i, k| (alphas[k] * self.lb[i]).exp() / self.y[i]);
        let ones = DVector::from_element(n, 1.0);
        let svd = a.clone().svd(true, true);
        let eta = svd.solve(&ones, 1e-14).ok()?;
        let r = &a * &eta - ones;
        if eta.iter().chain(r.iter()).any(|v| !v.is_finite()) {
            return None;
        }
        Some((eta.iter().cloned().collect(), r.iter().cloned().collect()))
    }

    fn cost(&self, alphas: &[f64]) -> f64 {
        match self.project(alphas) {
            Some((eta, r)) if eta.iter().all(|&e| e > 0.0) => r.iter().map(|v| v * v).sum(),
            _ => f64::INFINITY,
        }
    }

    fn refine(&self, start: &[f64]) -> Vec<f64> {
        let g = start.len();
        let mut alphas: Vec<f64> = start.iter().map(|a| a.clamp(ALPHA_MIN, ALPHA_MAX)).collect();
        let Some((_, mut r)) = self.project(&alphas) else {
            return alphas;
        };
        let mut cost: f64 = r.iter().map(|v| v * v).sum();
        let mut lambda = 1e-3;
        let n = r.len();
        for _ in 0..300 {
            let h = 1e-7;
            let mut jac = DMatrix::zeros(n, g);
            for k in 0..g {
                let mut up = alphas.clone();
                let mut dn = alphas.clone();
                up[k] += h;
                dn[k] -= h;
                let (Some((_, ru)), Some((_, rd))) = (self.project(&up), self.project(&dn)) else {
                    return alphas;
                };
                for i in 0..n {
                    jac[(i, k)] = (ru[i] - rd[i]) / (2.0 * h);
                }
            }
            let rv = DVector::from_vec(r.clone());
            let jtj = jac.transpose() * &jac;
            let jtr = jac.transpose() * rv;
            let mut improved = false;
            for _ in 0..20 {
                let mut m = jtj.clone();
                for k in 0..g {
                    m[(k, k)] += lambda * (jtj[(k, k)] + 1e-12);
                }
                let Some(step) = m.lu().solve(&(-&jtr)) else {
                    lambda *= 10.0;
                    continue;
                };
                let trial: Vec<f64> = alphas
                    .iter()
                    .zip(step.iter())
                    .map(|(a, s)| (a + s).clamp(ALPHA_MIN, ALPHA_MAX))
                    .collect();
                if let Some((_, rt)) = self.project(&trial) {
                    let ct: f64 = rt.iter().map(|v| v * v).sum();
                    if ct < cost {
                        let moved = trial
                            .iter()
                            .zip(&alphas)
                            .map(|(a, b)| (a - b).abs())
                            .fold(0.0, f64::max);
                        alphas = trial;
                        r = rt;
                        let old = cost;
                        cost = ct;
                        lambda = (lambda * 0.3).max(1e-15);
                        improved = true;
                        if moved < 1e-14 || old - ct <= 1e-30 {
                            return alphas;
                        }
                        break;
                    }
                }
                lambda *= 10.0;
            }
            if !improved {
                break;
            }
        }
        alphas
    }
}

fn combinations(cands: &[f64], g: usize) -> Vec<Vec<f64>> {
    fn rec(cands: &[f64], g: usize, start: usize, cur: &mut Vec<f64>, out: &mut Vec<Vec<f64>>) {
        if cur.len() == g {
            out.push(cur.clone());
            return;
        }
        for i in start..cands.len() {
            cur.push(cands[i]);
            rec(cands, g, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(cands, g, 0, &mut Vec::new(), &mut out);
    out
}

/// Local log-log slopes at the two ends of the sample.
fn end_slopes(lb: &[f64], ly: &[f64]) -> (f64, f64) {
    let n = lb.len();
    let lo = (ly[1] - ly[0]) / (lb[1] - lb[0]);
    let hi = (ly[n - 1] - ly[n - 2]) / (lb[n - 1] - lb[n - 2]);
    (lo, hi)
}

/// Best `g`-term fit.
pub fn fit_power_sum_terms(b: &[f64], y: &[f64], g: usize) -> Result<PowerSumFit> {
    if b.len() != y.len() || b.len() < 2 * g + 1 {
        return Err(Error::InvalidInput(format!(
            "need at least {} samples for a {g}-term fit, got {}",
            2 * g + 1,
            b.len()
        )));
    }
    if b.iter().chain(y).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidInput(
            "power-sum fit needs positive finite samples".into(),
        ));
    }
    let mut order: Vec<usize> = (0..b.len()).collect();
    order.sort_by(|&i, &j| b[i].total_cmp(&b[j]));
    let lb: Vec<f64> = order.iter().map(|&i| b[i].ln()).collect();
    let ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let prob = Problem { lb: lb.clone(), y: &ys };

    let cands: Vec<f64> = (0..20).map(|i| 1.05 + 0.05 * i as f64).collect();
    let mut scored: Vec<(f64, Vec<f64>)> = combinations(&cands, g)
        .into_iter()
        .map(|c| (prob.cost(&c), c))
        .filter(|(c, _)| c.is_finite())
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut starts: Vec<Vec<f64>> = scored.into_iter().take(8).map(|s| s.1).collect();
    let (lo, hi) = end_slopes(&lb, &ly);
    let (lo, hi) = (lo.clamp(ALPHA_MIN, ALPHA_MAX), hi.clamp(ALPHA_MIN, ALPHA_MAX));
    let peel: Vec<f64> = if g == 1 {
        vec![0.5 * (lo + hi)]
    } else {
        (0..g)
            .map(|k| hi + (lo - hi) * k as f64 / (g - 1) as f64 + 1e-3 * k as f64)
            .collect()
    };
    starts.push(peel);

    let mut best: Option<(f64, Vec<f64>)> = None;
    for s in starts {
        let a = prob.refine(&s);
        let c = prob.cost(&a);
        if c.is_finite() && best.as_ref().is_none_or(|(bc, _)| c < *bc) {
            best = Some((c, a));
        }
    }
    let Some((_, alphas)) = best else {
        return Err(Error::FitFailure {
            residual: f64::INFINITY,
            terms: g,
        });
    };
    let (eta, r) = prob.project(&alphas).ok_or(Error::FitFailure {
        residual: f64::INFINITY,
        terms: g,
    })?;
    let residual = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut terms: Vec<PowerTerm> = alphas
        .iter()
        .zip(&eta)
        .map(|(&alpha, &eta)| PowerTerm { alpha, eta })
        .collect();
    terms.sort_by(|a, b| b.alpha.total_cmp(&a.alpha));
    Ok(PowerSumFit { terms, residual })
}

/// Merges exponents closer than `tol`, weight-averaging the exponent.
pub fn merge_terms(terms: &[PowerTerm], tol: f64) -> Vec<PowerTerm> {
    let mut sorted = terms.to_vec();
    sorted.sort_by(|a, b| b.alpha.total_cmp(&a.alpha));
    let mut out: Vec<PowerTerm> = Vec::new();
    for t in sorted {
        match out.last_mut() {
            Some(last) if (last.alpha - t.alpha).abs() < tol => {
                let w = last.eta + t.eta;
                last.alpha = (last.alpha * last.eta + t.alpha * t.eta) / w;
                last.eta = w;
            }
            _ => out.push(t),
        }
    }
    out
}

/// Smallest number of terms (up to `max_terms`) reaching `target` relative
/// residual; fails when even `max_terms` stays above `fail_above`.
pub fn fit_power_sum(b: &[f64], y: &[f64], max_terms: usize, target: f64, fail_above: f64) -> Result<PowerSumFit> {
    let mut best: Option<PowerSumFit> = None;
    for g in 1..=max_terms.max(1) {
        if b.len() < 2 * g + 1 {
            break;
        }
        let fit = match fit_power_sum_terms(b, y, g) {
            Ok(f) => f,
            Err(_) => continue,
        };
        let done = fit.residual < target;
        if best.as_ref().is_none_or(|bf| fit.residual < bf.residual) {
            best = Some(fit);
        }
        if done {
            break;
        }
    }
    let mut fit = best.ok_or(Error::FitFailure {
        residual: f64::INFINITY,
        terms: max_terms,
    })?;
    if fit.residual >= fail_above {
        return Err(Error::FitFailure {
            residual: fit.residual,
            terms: fit.terms.len(),
        });
    }
    fit.terms = merge_terms(&fit.terms, 0.01);
    Ok(fit)
}
