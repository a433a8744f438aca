//! Globally adaptive Gauss-Kronrod (7/15) quadrature.
//!
//! The interval with the largest error estimate is bisected until the summed
//! estimate meets `max(abs, rel * |I|)`. On half-lines the piece `(1, inf)`
//! is mapped by `v = 1/u`, so integrable power
//! singularities at either end of the half-line become endpoint singularities
//! that bisection resolves geometrically.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_48,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];

// 7-point Gauss weights for nodes XGK[1], XGK[3], XGK[5], XGK[7]
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_64,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 1e-10,
            rel: 1e-8,
            max_intervals: 20_000,
        }
    }
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Self {
            abs,
            rel,
            ..Self::default()
        }
    }

    /// Purely relative target, for evaluations whose magnitude is far below
    /// the default absolute floor.
    pub fn relative(rel: f64) -> Self {
        Self::new(0.0, rel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = fc * WGK[7];
    let mut res_g = fc * WG[3];
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    let res_abs = res_abs * half.abs();
    let res_asc = res_asc * half.abs();
    let mut error = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && error != 0.0 {
        error = res_asc * (200.0 * error / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * res_abs);
    }
    Segment { a, b, value, error }
}

/// Integrates `f` over the union of the given consecutive break points.
pub fn integrate_breaks<F: Fn(f64) -> f64>(f: F, breaks: &[f64], tol: Tolerance) -> Result<Estimate> {
    let segments: Vec<(f64, f64)> = breaks.windows(2).map(|w| (w[0], w[1])).collect();
    integrate_segments(f, &segments, tol)
}

/// Integrates `f` over a list of disjoint intervals, refining globally.
fn integrate_segments<F: Fn(f64) -> f64>(f: F, segments: &[(f64, f64)], tol: Tolerance) -> Result<Estimate> {
    let mut heap = BinaryHeap::new();
    let mut frozen: Vec<Segment> = Vec::new();
    for &(a, b) in segments {
        if b > a {
            heap.push(gk15(&f, a, b));
        }
    }
    if heap.is_empty() {
        return Ok(Estimate { value: 0.0, error: 0.0 });
    }
    let mut count = heap.len();
    loop {
        let (value, error) = heap
            .iter()
            .chain(frozen.iter())
            .fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
        if !value.is_finite() || !error.is_finite() {
            return Err(Error::QuadratureNonConvergence {
                estimate: value,
                error,
                intervals: count,
            });
        }
        if error <= tol.abs.max(tol.rel * value.abs()) {
            return Ok(Estimate { value, error });
        }
        let Some(worst) = heap.pop() else {
            return Err(Error::QuadratureNonConvergence {
                estimate: value,
                error,
                intervals: count,
            });
        };
        if count >= tol.max_intervals {
            return Err(Error::QuadratureNonConvergence {
                estimate: value,
                error,
                intervals: count,
            });
        }
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            frozen.push(worst);
            continue;
        }
        heap.push(gk15(&f, worst.a, mid));
        heap.push(gk15(&f, mid, worst.b));
        count += 1;
    }
}

pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<Estimate> {
    if b < a {
        let r = integrate_breaks(f, &[b, a], tol)?;
        return Ok(Estimate {
            value: -r.value,
            error: r.error,
        });
    }
    integrate_breaks(f, &[a, b], tol)
}

/// `int_lo^inf f(v) dv` for `lo > 0`, via `v = lo / u` on `(0, 1]`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, lo: f64, tol: Tolerance) -> Result<Estimate> {
    if lo <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "semi-infinite map needs a positive lower limit, got {lo}"
        )));
    }
    integrate_breaks(
        |u: f64| {
            if u <= 0.0 {
                return 0.0;
            }
            let v = lo / u;
            f(v) * lo / (u * u)
        },
        &[0.0, 1.0],
        tol,
    )
}

/// `int_lo^hi f(v) dv` on the positive half-line, `hi` possibly infinite.
///
/// The range is split at `v = 1`; `(0, 1]` is integrated directly and
/// `(1, hi)` either directly or through the `v = 1/u` map when `hi` is infinite.
pub fn integrate_positive<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: Tolerance) -> Result<Estimate> {
    if !(hi > lo) {
        return Ok(Estimate { value: 0.0, error: 0.0 });
    }
    if hi.is_infinite() {
        // (split, inf) is mapped onto s in [-1, 0) by v = split / (-s), keeping
        // full relative precision next to the image of infinity
        let split = lo.max(1.0);
        let g = |s: f64| {
            if s >= 0.0 {
                f(s)
            } else {
                let w = -s;
                let v = split / w;
                f(v) * split / (w * w)
            }
        };
        let mut segments = vec![(-1.0, 0.0)];
        if lo < split {
            segments.push((lo, split));
        }
        integrate_segments(g, &segments, tol)
    } else if lo < 1.0 && hi > 1.0 {
        integrate_breaks(f, &[lo, 1.0, hi], tol)
    } else {
        integrate_breaks(f, &[lo, hi], tol)
    }
}

/// Adaptive Simpson rule, used where the integrand is smooth and cheap.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, max_depth: u32) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    if b == a {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, max_depth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polynomial_exact() {
        let r = integrate(|x| 3.0 * x * x, 0.0, 2.0, Tolerance::default()).unwrap();
        assert_relative_eq!(r.value, 8.0, max_relative = 1e-14);
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let r = integrate(|x| x, 1.0, 0.0, Tolerance::default()).unwrap();
        assert_relative_eq!(r.value, -0.5, max_relative = 1e-14);
    }

    #[test]
    fn endpoint_singularity() {
        // int_0^1 x^{-0.8} dx = 5
        let r = integrate(|x: f64| x.powf(-0.8), 0.0, 1.0, Tolerance::new(1e-10, 1e-10)).unwrap();
        assert_relative_eq!(r.value, 5.0, max_relative = 1e-9);
    }

    #[test]
    fn half_line_power_tail() {
        // int_1^inf v^{-2.5} dv = 1/1.5
        let r = integrate_to_infinity(|v: f64| v.powf(-2.5), 1.0, Tolerance::default()).unwrap();
        assert_relative_eq!(r.value, 1.0 / 1.5, max_relative = 1e-9);
        let r = integrate_positive(|v: f64| (-v).exp(), 0.0, f64::INFINITY, Tolerance::default()).unwrap();
        assert_relative_eq!(r.value, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn divergent_integral_reports_nonconvergence() {
        let r = integrate(|x: f64| 1.0 / x, 0.0, 1.0, Tolerance::default());
        assert!(matches!(r, Err(Error::QuadratureNonConvergence { .. })));
    }

    #[test]
    fn simpson_matches_antiderivative() {
        let v = adaptive_simpson(&|x: f64| x.exp(), 0.0, 1.0, 1e-12, 40);
        assert_relative_eq!(v, std::f64::consts::E - 1.0, max_relative = 1e-11);
    }
}
