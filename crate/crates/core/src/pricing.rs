//! Bond-price functions `A`, `B` of the affine term structure
//! `P(t, T) = exp(-A(T-t) - B(T-t) R(t))`, the HJM residual and the Monte
//! Carlo martingale check.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generating::{DriftSpec, GeneratingPair, ProjectionTriplet};
use crate::laplace::projection_laplace_with;
use crate::quad::{adaptive_simpson, Tolerance};
use crate::simulate::ShortRatePaths;

pub const DEFAULT_V_MAX: f64 = 30.0;
pub const DEFAULT_TOL: f64 = 1e-10;
/// Largest step of the B integrator.
pub const MAX_STEP: f64 = 0.05;
const START_STEP: f64 = 1e-8;
/// The midpoint derivative error of the interpolant is a small multiple of
/// the per-unit-step local error.
const CONTROL_FACTOR: f64 = 0.1;

/// `B` on an adaptive grid together with `B'` from the equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BGrid {
    pub v: Vec<f64>,
    pub b: Vec<f64>,
    pub db: Vec<f64>,
}

/// Solves `B' = a B - c B^2 / 2 - J_mu(B) + 1`, `B(0) = 0`, by Dormand-Prince
/// 5(4) with local error at most `tol` per unit step. Steps are also rejected
/// while the cubic Hermite interpolant misses the equation by more than `tol`
/// at the step midpoint.
pub fn solve_b<J>(a: f64, c: f64, j_mu: J, v_max: f64, tol: f64) -> Result<BGrid>
where
    J: Fn(f64) -> Result<f64>,
{
    if !(v_max > 0.0 && tol > 0.0) || !(c >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "solve_b needs v_max > 0, tol > 0, c >= 0 (got {v_max}, {tol}, {c})"
        )));
    }
    let rhs = |b: f64| -> Result<f64> { Ok(a * b - 0.5 * c * b * b - j_mu(b)? + 1.0) };
    const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let _ = C;
    let mut v = 0.0;
    let mut y = 0.0;
    let mut f0 = rhs(y)?;
    let mut out = BGrid {
        v: vec![0.0],
        b: vec![0.0],
        db: vec![f0],
    };
    // Geometric start: J_mu(B) may be non-smooth at B = 0.
    let mut h = START_STEP.min(v_max);
    while v < v_max {
        if v + h > v_max * (1.0 - 1e-12) {
            h = v_max - v;
        }
        if h < 1e-12 * v_max.max(1.0) {
            return Err(Error::StepUnderflow { at: v });
        }
        let mut k = [0.0; 7];
        k[0] = f0;
        for s in 1..7 {
            let ys = y + h * (0..s).map(|j| A[s][j] * k[j]).sum::<f64>();
            k[s] = rhs(ys)?;
        }
        let y5 = y + h * (0..6).map(|j| A[6][j] * k[j]).sum::<f64>();
        let y4 = y + h * (0..7).map(|j| B4[j] * k[j]).sum::<f64>();
        let err = (y5 - y4).abs();
        // targets are floored at the rounding level of large B
        let ulp = f64::EPSILON * y5.abs().max(y.abs());
        let allowed = (CONTROL_FACTOR * tol * h).max(64.0 * ulp);
        let mut defect_ok = true;
        if err <= allowed && y5.is_finite() {
            // defect of the Hermite interpolant at the step midpoint
            let mid = 0.5 * (y + y5) + h * (f0 - k[6]) / 8.0;
            let dmid = 1.5 * (y5 - y) / h - 0.25 * (f0 + k[6]);
            let defect = (dmid - rhs(mid)?).abs();
            defect_ok = defect <= tol.max(8.0 * ulp / h);
        }
        if err <= allowed && y5.is_finite() && defect_ok {
            v = if v_max - (v + h) < 1e-12 * v_max { v_max } else { v + h };
            y = y5;
            f0 = k[6];
            out.v.push(v);
            out.b.push(y);
            out.db.push(f0);
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * (allowed / err).powf(0.2)).clamp(0.2, 5.0)
        };
        if !defect_ok {
            h *= 0.5;
            continue;
        }
        h = (h * factor).min(MAX_STEP).min(v.max(START_STEP));
        if !y5.is_finite() {
            h *= 0.1;
        }
    }
    Ok(out)
}

/// `A(v) = int_0^v (b B(u) - J_nu0(B(u))) du` at the grid points of `B`.
pub fn solve_a<J>(b: f64, j_nu0: J, grid: &BGrid) -> Result<(Vec<f64>, Vec<f64>)>
where
    J: Fn(f64) -> Result<f64>,
{
    let err = std::cell::RefCell::new(None);
    let rhs = |u: f64| -> f64 {
        match j_nu0(u) {
            Ok(j) => b * u - j,
            Err(e) => {
                err.borrow_mut().get_or_insert(e);
                0.0
            }
        }
    };
    let mut a = vec![0.0; grid.v.len()];
    let mut da = vec![0.0; grid.v.len()];
    da[0] = rhs(grid.b[0]);
    for i in 1..grid.v.len() {
        let (v0, v1) = (grid.v[i - 1], grid.v[i]);
        let seg = |u: f64| rhs(hermite(v0, v1, grid.b[i - 1], grid.b[i], grid.db[i - 1], grid.db[i], u).0);
        a[i] = a[i - 1] + adaptive_simpson(&seg, v0, v1, 1e-14, 20);
        da[i] = rhs(grid.b[i]);
    }
    match err.into_inner() {
        Some(e) => Err(e),
        None => Ok((a, da)),
    }
}

/// Cubic Hermite value and derivative on `[v0, v1]`.
fn hermite(v0: f64, v1: f64, y0: f64, y1: f64, d0: f64, d1: f64, v: f64) -> (f64, f64) {
    let h = v1 - v0;
    if h == 0.0 {
        return (y0, d0);
    }
    let t = (v - v0) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let val = h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1;
    let dh00 = (6.0 * t2 - 6.0 * t) / h;
    let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
    let dh01 = (-6.0 * t2 + 6.0 * t) / h;
    let dh11 = 3.0 * t2 - 2.0 * t;
    let der = dh00 * y0 + dh10 * d0 + dh01 * y1 + dh11 * d1;
    (val, der)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineParams {
    pub drift: DriftSpec,
    /// Coefficient of `B^2/2` in the equation for `B`.
    pub c_ode: f64,
    pub triplet: ProjectionTriplet,
}

/// Gridded `A`, `B` with their derivatives from the equations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineSolution {
    pub grid: Vec<f64>,
    pub b: Vec<f64>,
    pub a: Vec<f64>,
    pub db: Vec<f64>,
    pub da: Vec<f64>,
    pub params: AffineParams,
}

impl AffineSolution {
    /// With `J_{Z^{G(x)}}(b) = c b^2 x + ...` the equation for `B` carries
    /// `c B^2`, i.e. `c_ode = 2 c`.
    pub fn from_triplet(triplet: &ProjectionTriplet, drift: DriftSpec, v_max: f64, tol: f64) -> Result<Self> {
        let c_ode = 2.0 * triplet.c;
        let mu = &triplet.mu;
        let nu0 = &triplet.nu0;
        let bg = solve_b(drift.a, c_ode, |b| mu.laplace(b), v_max, tol)?;
        let (a, da) = solve_a(drift.b, |b| nu0.laplace(b), &bg)?;
        if let Some(i) = bg.b.iter().position(|&b| b < 0.0) {
            return Err(Error::Constraint(format!("B turned negative at v = {}", bg.v[i])));
        }
        Ok(AffineSolution {
            grid: bg.v,
            b: bg.b,
            a,
            db: bg.db,
            da,
            params: AffineParams {
                drift,
                c_ode,
                triplet: triplet.clone(),
            },
        })
    }

    pub fn v_max(&self) -> f64 {
        *self.grid.last().unwrap_or(&0.0)
    }

    fn locate(&self, v: f64) -> Result<usize> {
        if !(v >= 0.0) || v > self.v_max() * (1.0 + 1e-14) {
            return Err(Error::OutOfGrid {
                requested: v,
                v_max: self.v_max(),
            });
        }
        let i = self.grid.partition_point(|&g| g <= v);
        Ok(i.clamp(1, self.grid.len() - 1) - 1)
    }

    /// `(B(v), B'(v))`.
    pub fn b_at(&self, v: f64) -> Result<(f64, f64)> {
        let i = self.locate(v)?;
        if v == self.grid[i] {
            return Ok((self.b[i], self.db[i]));
        }
        Ok(hermite(
            self.grid[i],
            self.grid[i + 1],
            self.b[i],
            self.b[i + 1],
            self.db[i],
            self.db[i + 1],
            v.min(self.grid[i + 1]),
        ))
    }

    /// `(A(v), A'(v))`.
    pub fn a_at(&self, v: f64) -> Result<(f64, f64)> {
        let i = self.locate(v)?;
        if v == self.grid[i] {
            return Ok((self.a[i], self.da[i]));
        }
        Ok(hermite(
            self.grid[i],
            self.grid[i + 1],
            self.a[i],
            self.a[i + 1],
            self.da[i],
            self.da[i + 1],
            v.min(self.grid[i + 1]),
        ))
    }

    /// Largest `|B' - (aB - c B^2/2 - J_mu(B) + 1)|` at interval midpoints,
    /// with `B, B'` from the interpolant.
    pub fn midpoint_residual(&self) -> Result<f64> {
        let p = &self.params;
        let mut worst = 0.0f64;
        for w in self.grid.windows(2) {
            let m = 0.5 * (w[0] + w[1]);
            let (b, db) = self.b_at(m)?;
            let rhs = p.drift.a * b - 0.5 * p.c_ode * b * b - p.triplet.mu.laplace(b)? + 1.0;
            worst = worst.max((db - rhs).abs());
        }
        Ok(worst)
    }

    /// Copy with `B` and `B'` multiplied by `factor`.
    pub fn scaled_b(&self, factor: f64) -> Self {
        let mut s = self.clone();
        s.b.iter_mut().for_each(|b| *b *= factor);
        s.db.iter_mut().for_each(|b| *b *= factor);
        s
    }

    /// Copy with `A(v) + slope * v`.
    pub fn shifted_a(&self, slope: f64) -> Self {
        let mut s = self.clone();
        for (a, v) in s.a.iter_mut().zip(&self.grid) {
            *a += slope * v;
        }
        s.da.iter_mut().for_each(|d| *d += slope);
        s
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("v,B,A\n");
        for i in 0..self.grid.len() {
            let _ = writeln!(out, "{},{},{}", self.grid[i], self.b[i], self.a[i]);
        }
        out
    }
}

pub fn bond_price(sol: &AffineSolution, t: f64, maturity: f64, r_t: f64) -> Result<f64> {
    if !(maturity >= t) {
        return Err(Error::InvalidInput(format!("maturity {maturity} precedes t = {t}")));
    }
    let v = maturity - t;
    if v == 0.0 {
        return Ok(1.0);
    }
    let (a, _) = sol.a_at(v)?;
    let (b, _) = sol.b_at(v)?;
    Ok((-a - b * r_t).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermPoint {
    pub maturity: f64,
    pub price: f64,
    pub yield_: f64,
}

/// `(T, P(0, T), -ln P / T)`; the yield at `T = 0` is the short rate.
pub fn term_structure(sol: &AffineSolution, r0: f64, maturities: &[f64]) -> Result<Vec<TermPoint>> {
    maturities
        .iter()
        .map(|&m| {
            let p = bond_price(sol, 0.0, m, r0)?;
            let y = if m == 0.0 { r0 } else { -p.ln() / m };
            Ok(TermPoint {
                maturity: m,
                price: p,
                yield_: y,
            })
        })
        .collect()
}

/// Largest `|J_Z(B(v) G(x)) + A'(v) + (B'(v) - 1) x - B(v) F(x)|`.
pub fn hjm_residual(pair: &GeneratingPair, sol: &AffineSolution, v_grid: &[f64], x_grid: &[f64]) -> Result<f64> {
    let tol = Tolerance::new(1e-15, 1e-12);
    let gs: Vec<Vec<f64>> = x_grid.iter().map(|&x| pair.gfun.eval(x)).collect();
    let mut worst = 0.0f64;
    for &v in v_grid {
        let (b, db) = sol.b_at(v)?;
        let (_, da) = sol.a_at(v)?;
        for (&x, g) in x_grid.iter().zip(&gs) {
            let j = projection_laplace_with(&pair.model, g, b, tol)?;
            let r = j + da + (db - 1.0) * x - b * pair.drift.eval(x);
            worst = worst.max(r.abs());
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub maturity: f64,
    pub reference: f64,
    pub checkpoints: Vec<f64>,
    pub means: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// `max_k |mean_k - P(0, T)|` over the pooled standard error.
    pub flatness: f64,
}

/// Pairwise summation; fixed association order for a given length.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 32 {
        return x.iter().sum();
    }
    let mid = x.len() / 2;
    pairwise_sum(&x[..mid]) + pairwise_sum(&x[mid..])
}

/// Means of the discounted bond prices `exp(-int_0^t R - A(T-t) - B(T-t) R(t))`
/// at the checkpoints.
pub fn martingale_check(
    paths: &ShortRatePaths,
    sol: &AffineSolution,
    maturity: f64,
    checkpoints: &[f64],
) -> Result<MartingaleReport> {
    let x0 = paths.x0;
    let reference = bond_price(sol, 0.0, maturity, x0)?;
    let mut means = Vec::with_capacity(checkpoints.len());
    let mut ses = Vec::with_capacity(checkpoints.len());
    for &t in checkpoints {
        if t > maturity {
            return Err(Error::InvalidInput(format!(
                "checkpoint {t} beyond maturity {maturity}"
            )));
        }
        let (vals, ints) = if t == 0.0 {
            (vec![x0; paths.n_paths], vec![0.0; paths.n_paths])
        } else {
            let k = paths.time_index(t)?;
            (paths.column(k), paths.integral_column(k))
        };
        let (a, _) = sol.a_at(maturity - t)?;
        let (b, _) = sol.b_at(maturity - t)?;
        let p: Vec<f64> = vals.iter().zip(&ints).map(|(r, i)| (-i - a - b * r).exp()).collect();
        let n = p.len() as f64;
        let mean = pairwise_sum(&p) / n;
        let se = if p.iter().all(|&v| v == p[0]) {
            0.0
        } else {
            let dev: Vec<f64> = p.iter().map(|v| (v - mean) * (v - mean)).collect();
            (pairwise_sum(&dev) / (n - 1.0) / n).sqrt()
        };
        means.push(mean);
        ses.push(se);
    }
    let nonzero: Vec<f64> = ses.iter().cloned().filter(|s| *s > 0.0).collect();
    let pooled = if nonzero.is_empty() {
        0.0
    } else {
        (nonzero.iter().map(|s| s * s).sum::<f64>() / nonzero.len() as f64).sqrt()
    };
    let max_dev = means.iter().map(|m| (m - reference).abs()).fold(0.0, f64::max);
    let flatness = if pooled > 0.0 {
        max_dev / pooled
    } else if max_dev == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(MartingaleReport {
        maturity,
        reference,
        checkpoints: checkpoints.to_vec(),
        means,
        std_errors: ses,
        flatness,
    })
}
