//! Regular-variation indices, exact power-law detection from two scaling
//! relations, and integer combinations approximating a real number.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{self, Tolerance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEstimate {
    pub alpha: f64,
    /// Spread of the raw estimates feeding `alpha`.
    pub diagnostic: f64,
    pub raw: Vec<f64>,
}

/// Neville extrapolation to `t = 0` of samples `(t_i, v_i)`.
fn extrapolate_to_zero(t: &[f64], v: &[f64]) -> f64 {
    let n = t.len();
    let mut p = v.to_vec();
    for k in 1..n {
        for i in 0..n - k {
            p[i] = (t[i + k] * p[i] - t[i] * p[i + 1]) / (t[i + k] - t[i]);
        }
    }
    p[0]
}

/// Index of regular variation of `J` at the origin from
/// `ln(J(b x) / J(x)) / ln b`, `x = 10^-1 .. 10^-8`, extrapolated in `x`.
pub fn rv_index_from_laplace<F: Fn(f64) -> f64>(j: F, b_probe: f64) -> Result<IndexEstimate> {
    if !(b_probe > 0.0 && b_probe != 1.0) {
        return Err(Error::InvalidInput(format!(
            "probe factor must be positive and != 1, got {b_probe}"
        )));
    }
    let lb = b_probe.ln();
    let mut xs = Vec::new();
    let mut raw = Vec::new();
    for k in 1..=8 {
        let x = 10f64.powi(-k);
        let (jx, jbx) = (j(x), j(b_probe * x));
        if !(jx > 0.0 && jbx > 0.0 && jx.is_finite() && jbx.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "J must be positive and finite near 0, J({x}) = {jx}"
            )));
        }
        xs.push(x);
        raw.push((jbx / jx).ln() / lb);
    }
    let n = raw.len();
    let step = (raw[n - 1] - raw[n - 2]).abs();
    if step > 0.05 {
        return Err(Error::NoConvergence(format!(
            "successive index estimates differ by {step:.3}"
        )));
    }
    // depth-4 extrapolation over the last decades
    let alpha_ex = extrapolate_to_zero(&xs[n - 4..], &raw[n - 4..]);
    let alpha = if (alpha_ex - raw[n - 1]).abs() <= step.max(1e-12) * 10.0 {
        alpha_ex
    } else {
        raw[n - 1]
    };
    Ok(IndexEstimate {
        alpha,
        diagnostic: step,
        raw,
    })
}

/// `int_1^Y v^2 g(v) dv` with `v = e^t`.
fn second_moment_to(g: &dyn Fn(f64) -> f64, y: f64) -> Result<f64> {
    let tol = Tolerance::new(1e-300, 1e-9);
    Ok(quad::integrate(
        |t: f64| {
            let v = t.exp();
            v * v * v * g(v)
        },
        0.0,
        y.ln(),
        tol,
    )?
    .value)
}

fn log_ratio_index(h: &dyn Fn(f64) -> f64, y_grid: &[f64]) -> Result<(f64, Vec<f64>)> {
    let mut ys: Vec<f64> = y_grid.iter().cloned().filter(|y| *y > 0.0 && y.is_finite()).collect();
    ys.sort_by(f64::total_cmp);
    for &y in ys.iter().rev() {
        let hy = h(y);
        let vals: Vec<f64> = [2.0f64, 4.0, 8.0]
            .iter()
            .map(|&b| {
                let hb = h(b * y);
                if hy > f64::MIN_POSITIVE && hb > f64::MIN_POSITIVE && hb.is_finite() && hy.is_finite() {
                    (hb / hy).ln() / b.ln()
                } else {
                    f64::NAN
                }
            })
            .collect();
        if vals.iter().all(|v| v.is_finite()) {
            let mean = vals.iter().sum::<f64>() / 3.0;
            return Ok((mean, vals));
        }
    }
    Err(Error::InvalidInput("no probe point with positive finite values".into()))
}

fn spread(v: &[f64]) -> f64 {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

/// Index from a Lévy density, `g(b y) / g(y) -> b^{-alpha-1}` as `y -> inf`.
pub fn rv_index_from_density<F: Fn(f64) -> f64>(g: F, y_probe_grid: &[f64]) -> Result<IndexEstimate> {
    let i4 = second_moment_to(&g, 1e4)?;
    let i6 = second_moment_to(&g, 1e6)?;
    let i8 = second_moment_to(&g, 1e8)?;
    let diverging = i8 > i6 * 1.01 && i6 > i4;
    if !diverging {
        return Err(Error::Divergence(format!(
            "int v^2 g(v) dv appears finite ({i8:.6e} up to 1e8); the density has no regularly varying index in (0, 2)"
        )));
    }
    let (m, raw) = log_ratio_index(&g, y_probe_grid)?;
    Ok(IndexEstimate {
        alpha: -1.0 - m,
        diagnostic: spread(&raw),
        raw,
    })
}

/// Index from `F(v) = int_0^v u^2 rho(du)`, `F(b y) / F(y) -> b^{2-alpha}`.
pub fn rv_index_from_tail<F: Fn(f64) -> f64>(f_tilde: F, y_grid: &[f64]) -> Result<IndexEstimate> {
    let (m, raw) = log_ratio_index(&f_tilde, y_grid)?;
    Ok(IndexEstimate {
        alpha: 2.0 - m,
        diagnostic: spread(&raw),
        raw,
    })
}

/// `F(v) = int_0^v u^2 g(u) du` by quadrature, for use with
/// [`rv_index_from_tail`].
pub fn truncated_second_moment<G: Fn(f64) -> f64>(g: G, v: f64) -> Result<f64> {
    let tol = Tolerance::new(1e-300, 1e-11);
    let head = quad::integrate(|u: f64| u * u * g(u), 0.0, v.min(1.0), tol)?.value;
    if v <= 1.0 {
        return Ok(head);
    }
    let tail = quad::integrate(
        |t: f64| {
            let u = t.exp();
            u * u * u * g(u)
        },
        0.0,
        v.ln(),
        tol,
    )?
    .value;
    Ok(head + tail)
}

/// `J(beta b) = eta J(b)` and `J(gamma b) = theta J(b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRelationEvidence {
    pub beta: f64,
    pub eta: f64,
    pub gamma: f64,
    pub theta: f64,
    #[serde(default)]
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLaw {
    pub c: f64,
    pub alpha: f64,
    pub scaling_residual: f64,
    pub fit_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Rationality {
    /// No convergent with denominator below `10^6` reproduces the value.
    Irrational,
    /// Reproduced by `p/q` with `10^3 <= q < 10^6`.
    Ambiguous { p: i64, q: i64 },
    /// Reproduced by `p/q` with `q < 10^3`.
    Rational { p: i64, q: i64 },
}

/// Continued-fraction heuristic for the rationality of a float.
pub fn classify_rationality(r: f64) -> Rationality {
    const MATCH: f64 = 1e-13;
    let target = r;
    let (mut h_prev, mut h) = (1i128, r.floor() as i128);
    let (mut k_prev, mut k) = (0i128, 1i128);
    let mut frac = r - r.floor();
    loop {
        let approx = h as f64 / k as f64;
        if (approx - target).abs() <= MATCH * target.abs().max(1.0) {
            let (p, q) = (h as i64, k as i64);
            return if k < 1_000 {
                Rationality::Rational { p, q }
            } else {
                Rationality::Ambiguous { p, q }
            };
        }
        if frac == 0.0 || k >= 1_000_000 {
            return Rationality::Irrational;
        }
        let inv = 1.0 / frac;
        let a = inv.floor();
        frac = inv - a;
        let a = a as i128;
        let (h_new, k_new) = (a * h + h_prev, a * k + k_prev);
        h_prev = h;
        h = h_new;
        k_prev = k;
        k = k_new;
        if k >= 1_000_000 {
            return Rationality::Irrational;
        }
    }
}

/// Recovers `J(b) = C b^alpha` from two multiplicative scaling relations
/// with incommensurable bases, after verifying them numerically.
pub fn power_law_detect<F: Fn(f64) -> f64>(j: F, ev: &ScalingRelationEvidence) -> Result<PowerLaw> {
    for (name, v) in [
        ("beta", ev.beta),
        ("eta", ev.eta),
        ("gamma", ev.gamma),
        ("theta", ev.theta),
    ] {
        if !(v > 1.0 && v.is_finite()) {
            return Err(Error::InvalidInput(format!("{name} must exceed 1, got {v}")));
        }
    }
    if let Rationality::Rational { p, q } = classify_rationality(ev.beta.ln() / ev.gamma.ln()) {
        return Err(Error::IrrationalitySuspect { p, q });
    }
    let grid: Vec<f64> = (0..50).map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / 49.0)).collect();
    let mut scaling = 0.0f64;
    for &b in &grid {
        let jb = j(b);
        if !(jb > 0.0 && jb.is_finite()) {
            return Err(Error::Hypothesis(format!("J({b}) = {jb} is not positive")));
        }
        scaling = scaling
            .max((j(ev.beta * b) - ev.eta * jb).abs() / jb)
            .max((j(ev.gamma * b) - ev.theta * jb).abs() / jb);
    }
    if scaling > 1e-8 {
        return Err(Error::Hypothesis(format!(
            "scaling relations fail: relative residual {scaling:.3e} > 1e-8"
        )));
    }
    let a1 = ev.eta.ln() / ev.beta.ln();
    let a2 = ev.theta.ln() / ev.gamma.ln();
    if (a1 - a2).abs() > 1e-6 {
        return Err(Error::Inconsistent(format!(
            "ln eta / ln beta = {a1} but ln theta / ln gamma = {a2}"
        )));
    }
    let alpha = a1;
    let c = j(1.0);
    let fit = grid
        .iter()
        .map(|&b| (j(b) - c * b.powf(alpha)).abs() / j(b))
        .fold(0.0f64, f64::max);
    if fit > 1e-6 {
        return Err(Error::Hypothesis(format!("J deviates from C b^alpha by {fit:.3e}")));
    }
    if !(alpha > 1.0 && alpha < 2.0) {
        return Err(Error::Hypothesis(format!("detected index {alpha} outside (1, 2)")));
    }
    Ok(PowerLaw {
        c,
        alpha,
        scaling_residual: scaling,
        fit_residual: fit,
    })
}

fn check_combination(p: f64, q: f64, x: f64, delta: f64, n: i64) -> Option<(i64, i64)> {
    let m = ((x - n as f64 * q) / p).round();
    if !m.is_finite() || m.abs() > 9.0e15 {
        return None;
    }
    let m = m as i64;
    ((x - (m as f64 * p + n as f64 * q)).abs() <= delta).then_some((m, n))
}

/// Integers `(m, n)` with `|x - (m p + n q)| <= delta`.
///
/// Greedy descent over the convergents of `q / p` first, then a doubling
/// exhaustive scan over `n`.
pub fn weyl_approximate(p: f64, q: f64, x: f64, delta: f64) -> Result<(i64, i64)> {
    if !(p > 0.0 && q > 0.0 && delta > 0.0) || !x.is_finite() {
        return Err(Error::InvalidInput(
            "weyl search needs p, q, delta > 0 and finite x".into(),
        ));
    }
    let theta = q / p;
    if let Rationality::Rational { p: a, q: b } = classify_rationality(theta) {
        return Err(Error::IrrationalitySuspect { p: a, q: b });
    }
    if let Some(hit) = check_combination(p, q, x, delta, 0) {
        return Ok(hit);
    }
    // convergent denominators k_j with signed errors e_j = k_j theta - h_j
    let mut dens: Vec<(i64, f64)> = Vec::new();
    let (mut h_prev, mut h) = (1i64, theta.floor() as i64);
    let (mut k_prev, mut k) = (0i64, 1i64);
    let mut frac = theta - theta.floor();
    while k < (1i64 << 40) {
        dens.push((k, k as f64 * theta - h as f64));
        if frac < 1e-15 {
            break;
        }
        let inv = 1.0 / frac;
        let a = inv.floor();
        frac = inv - a;
        let a = a as i64;
        let (hn, kn) = (
            a.saturating_mul(h).saturating_add(h_prev),
            a.saturating_mul(k).saturating_add(k_prev),
        );
        h_prev = h;
        h = hn;
        k_prev = k;
        k = kn;
    }
    // want n theta ~ x/p mod 1
    let t = x / p;
    let mut r = t - t.round();
    let mut n: i64 = 0;
    for &(kj, ej) in &dens {
        if ej == 0.0 {
            continue;
        }
        let c = (r / ej).trunc();
        if c != 0.0 {
            n = n.saturating_add((c as i64).saturating_mul(kj));
            r -= c * ej;
            // stop at the first, hence smallest, sufficient refinement
            if let Some(hit) = check_combination(p, q, x, delta, n) {
                return Ok(hit);
            }
        }
    }
    for cand in [n, -n] {
        if let Some(hit) = check_combination(p, q, x, delta, cand) {
            return Ok(hit);
        }
    }
    let mut lo: i64 = 1;
    let mut hi: i64 = 16;
    while hi <= (1i64 << 36) {
        for n in lo..=hi {
            for cand in [n, -n] {
                if let Some(hit) = check_combination(p, q, x, delta, cand) {
                    return Ok(hit);
                }
            }
        }
        lo = hi + 1;
        hi *= 2;
    }
    Err(Error::NoConvergence("weyl search exhausted its range".into()))
}
