//! One-dimensional Lévy measures on `(0, inf)` and their Laplace exponents
//! `J(b) = int (e^{-bv} - 1 + bv) rho(dv)`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{self, Tolerance};
use crate::special::{h_func, stable_constant};

/// Whether a measure integrates `v` near the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VariationHint {
    Finite,
    Infinite,
    #[default]
    Unknown,
}

/// Programmatic density `v -> f(v) >= 0`; not serializable.
#[derive(Clone)]
pub struct CustomDensity(pub Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl fmt::Debug for CustomDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomDensity(..)")
    }
}

impl PartialEq for CustomDensity {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

/// Parametric densities of absolutely continuous Lévy measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Density {
    /// `scale * v^{-1-alpha}`
    Power { scale: f64, alpha: f64 },
    /// `scale * e^{-rate v} * v^{-1-alpha}`
    TemperedStable { scale: f64, alpha: f64, rate: f64 },
    /// `scale * e^{-rate v}`
    Exponential { scale: f64, rate: f64 },
    /// `scale * v^{-1-alpha} * (1 + 1/(1 + ln(1 + v)))`, a power law with a
    /// slowly varying factor.
    PerturbedPower { scale: f64, alpha: f64 },
    /// `scale * v^{-1-alpha}` restricted to a finite union of intervals.
    PowerOnSet {
        scale: f64,
        alpha: f64,
        intervals: Vec<(f64, f64)>,
    },
    /// `scale * v^{-1-alpha}` restricted to the complement of the intervals.
    PowerOffSet {
        scale: f64,
        alpha: f64,
        intervals: Vec<(f64, f64)>,
    },
    #[serde(skip)]
    Custom(CustomDensity),
}

impl Density {
    pub fn custom<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        Density::Custom(CustomDensity(Arc::new(f)))
    }

    pub fn eval(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        match self {
            Density::Power { scale, alpha } => scale * v.powf(-1.0 - alpha),
            Density::TemperedStable { scale, alpha, rate } => scale * (-rate * v).exp() * v.powf(-1.0 - alpha),
            Density::Exponential { scale, rate } => scale * (-rate * v).exp(),
            Density::PerturbedPower { scale, alpha } => scale * v.powf(-1.0 - alpha) * (1.0 + 1.0 / (1.0 + v.ln_1p())),
            Density::PowerOnSet {
                scale,
                alpha,
                intervals,
            } => {
                if in_union(intervals, v) {
                    scale * v.powf(-1.0 - alpha)
                } else {
                    0.0
                }
            }
            Density::PowerOffSet {
                scale,
                alpha,
                intervals,
            } => {
                if in_union(intervals, v) {
                    0.0
                } else {
                    scale * v.powf(-1.0 - alpha)
                }
            }
            Density::Custom(c) => (c.0)(v),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self {
            Density::PowerOnSet { intervals, .. } | Density::PowerOffSet { intervals, .. } => intervals
                .iter()
                .flat_map(|&(a, b)| [a, b])
                .filter(|x| x.is_finite() && *x > 0.0)
                .collect(),
            _ => Vec::new(),
        }
    }

    fn variation(&self) -> VariationHint {
        match self {
            Density::Power { alpha, .. }
            | Density::TemperedStable { alpha, .. }
            | Density::PerturbedPower { alpha, .. } => {
                if *alpha >= 1.0 {
                    VariationHint::Infinite
                } else {
                    VariationHint::Finite
                }
            }
            Density::Exponential { .. } => VariationHint::Finite,
            Density::PowerOnSet { .. } | Density::PowerOffSet { .. } | Density::Custom(_) => VariationHint::Unknown,
        }
    }

    /// Largest `s` with `int_1^inf e^{s v} f(v) dv < inf`.
    fn exponential_moment_bound(&self) -> f64 {
        match self {
            Density::TemperedStable { rate, .. } | Density::Exponential { rate, .. } => *rate,
            _ => 0.0,
        }
    }
}

fn in_union(intervals: &[(f64, f64)], v: f64) -> bool {
    intervals.iter().any(|&(a, b)| v >= a && v < b)
}

/// A Lévy measure `rho` on `(0, inf)` with `int (v^2 ∧ v) rho(dv) < inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LevyMeasure1D {
    /// `scale * v^{-1-alpha} dv`, alpha in (1, 2).
    Stable { alpha: f64, scale: f64 },
    Density {
        density: Density,
        /// Upper end of the support; `None` means unbounded.
        #[serde(default)]
        support_hi: Option<f64>,
        #[serde(default)]
        variation: VariationHint,
    },
    /// Finite list of `(location, weight)` atoms.
    Atoms { atoms: Vec<(f64, f64)> },
    /// Sum of measures.
    Sum { parts: Vec<LevyMeasure1D> },
    /// `weight` times the image of `base` under `v -> factor * v`.
    Scaled {
        factor: f64,
        weight: f64,
        base: Box<LevyMeasure1D>,
    },
}

impl LevyMeasure1D {
    pub fn stable(alpha: f64, scale: f64) -> Self {
        LevyMeasure1D::Stable { alpha, scale }
    }

    pub fn zero() -> Self {
        LevyMeasure1D::Atoms { atoms: Vec::new() }
    }

    pub fn atoms(atoms: Vec<(f64, f64)>) -> Self {
        LevyMeasure1D::Atoms { atoms }
    }

    pub fn density(density: Density) -> Self {
        LevyMeasure1D::Density {
            density,
            support_hi: None,
            variation: VariationHint::Unknown,
        }
    }

    /// Stable measure whose Laplace exponent is `coef * b^alpha`.
    pub fn stable_with_laplace_coef(alpha: f64, coef: f64) -> Result<Self> {
        Ok(LevyMeasure1D::Stable {
            alpha,
            scale: coef / stable_constant(alpha)?,
        })
    }

    /// `weight` times the pushforward of `self` under `v -> factor * v`,
    /// simplified where a closed form exists.
    pub fn pushforward(&self, factor: f64, weight: f64) -> Self {
        if factor == 1.0 && weight == 1.0 {
            return self.clone();
        }
        match self {
            LevyMeasure1D::Stable { alpha, scale } => LevyMeasure1D::Stable {
                alpha: *alpha,
                scale: scale * weight * factor.powf(*alpha),
            },
            LevyMeasure1D::Atoms { atoms } => LevyMeasure1D::Atoms {
                atoms: atoms.iter().map(|&(v, w)| (v * factor, w * weight)).collect(),
            },
            LevyMeasure1D::Sum { parts } => LevyMeasure1D::Sum {
                parts: parts.iter().map(|p| p.pushforward(factor, weight)).collect(),
            },
            LevyMeasure1D::Scaled {
                factor: f0,
                weight: w0,
                base,
            } => LevyMeasure1D::Scaled {
                factor: f0 * factor,
                weight: w0 * weight,
                base: base.clone(),
            },
            LevyMeasure1D::Density { .. } => LevyMeasure1D::Scaled {
                factor,
                weight,
                base: Box::new(self.clone()),
            },
        }
    }

    /// True when the measure is identically zero.
    pub fn is_zero(&self) -> bool {
        match self {
            LevyMeasure1D::Stable { scale, .. } => *scale == 0.0,
            LevyMeasure1D::Atoms { atoms } => atoms.iter().all(|&(_, w)| w == 0.0),
            LevyMeasure1D::Sum { parts } => parts.iter().all(|p| p.is_zero()),
            LevyMeasure1D::Scaled { weight, base, .. } => *weight == 0.0 || base.is_zero(),
            LevyMeasure1D::Density { density, .. } => match density {
                Density::Power { scale, .. }
                | Density::TemperedStable { scale, .. }
                | Density::Exponential { scale, .. }
                | Density::PerturbedPower { scale, .. }
                | Density::PowerOnSet { scale, .. }
                | Density::PowerOffSet { scale, .. } => *scale == 0.0,
                Density::Custom(_) => false,
            },
        }
    }

    /// Checks the structural invariants and `int (v^2 ∧ v) rho(dv) < inf`.
    pub fn validate(&self) -> Result<()> {
        match self {
            LevyMeasure1D::Stable { alpha, scale } => {
                if !(*alpha > 1.0 && *alpha < 2.0) {
                    return Err(Error::InvalidInput(format!(
                        "stable index must lie in (1, 2), got {alpha}"
                    )));
                }
                if !(*scale >= 0.0 && scale.is_finite()) {
                    return Err(Error::InvalidInput(format!("stable scale must be >= 0, got {scale}")));
                }
                Ok(())
            }
            LevyMeasure1D::Atoms { atoms } => {
                for &(v, w) in atoms {
                    if !(v > 0.0 && v.is_finite()) || !(w > 0.0 && w.is_finite()) {
                        return Err(Error::InvalidInput(format!(
                            "atoms need positive finite location and weight, got ({v}, {w})"
                        )));
                    }
                }
                Ok(())
            }
            LevyMeasure1D::Sum { parts } => parts.iter().try_for_each(|p| p.validate()),
            LevyMeasure1D::Scaled { factor, weight, base } => {
                if !(*factor > 0.0 && factor.is_finite()) || !(*weight >= 0.0 && weight.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "pushforward needs factor > 0 and weight >= 0, got ({factor}, {weight})"
                    )));
                }
                base.validate()
            }
            LevyMeasure1D::Density { support_hi, .. } => {
                if let Some(hi) = support_hi {
                    if !(*hi > 0.0) {
                        return Err(Error::InvalidInput(format!("support_hi must be positive, got {hi}")));
                    }
                }
                let m = self
                    .integrate(|v| v.min(v * v), 0.0, f64::INFINITY, Tolerance::new(1e-12, 1e-8))
                    .map_err(|_| Error::InvalidInput("density does not integrate v^2 ∧ v".into()))?;
                if !m.is_finite() || m < 0.0 {
                    return Err(Error::InvalidInput("density does not integrate v^2 ∧ v".into()));
                }
                Ok(())
            }
        }
    }

    /// `int_{(lo, hi]} g(v) rho(dv)`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, g: F, lo: f64, hi: f64, tol: Tolerance) -> Result<f64> {
        self.integrate_dyn(&g, lo, hi, tol)
    }

    fn integrate_dyn(&self, g: &dyn Fn(f64) -> f64, lo: f64, hi: f64, tol: Tolerance) -> Result<f64> {
        if !(hi > lo) {
            return Ok(0.0);
        }
        match self {
            LevyMeasure1D::Atoms { atoms } => Ok(atoms
                .iter()
                .filter(|&&(v, _)| v > lo && v <= hi)
                .map(|&(v, w)| w * g(v))
                .sum()),
            LevyMeasure1D::Stable { alpha, scale } => {
                if *scale == 0.0 {
                    return Ok(0.0);
                }
                let (a, s) = (*alpha, *scale);
                Ok(quad::integrate_positive(|v| g(v) * s * v.powf(-1.0 - a), lo.max(0.0), hi, tol)?.value)
            }
            LevyMeasure1D::Density {
                density, support_hi, ..
            } => {
                let hi = hi.min(support_hi.unwrap_or(f64::INFINITY));
                let lo = lo.max(0.0);
                if !(hi > lo) {
                    return Ok(0.0);
                }
                let f = |v: f64| g(v) * density.eval(v);
                let mut breaks: Vec<f64> = density
                    .breakpoints()
                    .into_iter()
                    .filter(|&b| b > lo * (1.0 + 1e-12) && b < hi * (1.0 - 1e-12))
                    .collect();
                if breaks.is_empty() {
                    return Ok(quad::integrate_positive(f, lo, hi, tol)?.value);
                }
                breaks.sort_by(f64::total_cmp);
                breaks.dedup();
                let mut total = 0.0;
                let mut left = lo;
                for b in breaks.into_iter().chain(std::iter::once(hi)) {
                    total += quad::integrate_positive(f, left, b, tol)?.value;
                    left = b;
                }
                Ok(total)
            }
            LevyMeasure1D::Sum { parts } => {
                let mut total = 0.0;
                for p in parts {
                    total += p.integrate_dyn(g, lo, hi, tol)?;
                }
                Ok(total)
            }
            LevyMeasure1D::Scaled { factor, weight, base } => {
                let k = *factor;
                Ok(weight * base.integrate_dyn(&|u| g(k * u), lo / k, hi / k, tol)?)
            }
        }
    }

    /// Laplace exponent at `b >= 0` with the default tolerance.
    pub fn laplace(&self, b: f64) -> Result<f64> {
        self.laplace_with(b, Tolerance::default())
    }

    /// Laplace exponent at any real `b`; negative arguments need exponential
    /// moments of the measure.
    pub fn laplace_with(&self, b: f64, tol: Tolerance) -> Result<f64> {
        if b == 0.0 {
            return Ok(0.0);
        }
        if b < 0.0 && !self.has_exponential_moment(-b) {
            return Err(Error::Divergence(format!(
                "measure has no exponential moment of order {}",
                -b
            )));
        }
        match self {
            LevyMeasure1D::Stable { alpha, scale } => Ok(scale * stable_constant(*alpha)? * b.powf(*alpha)),
            LevyMeasure1D::Atoms { atoms } => Ok(atoms.iter().map(|&(v, w)| w * h_func(b * v)).sum()),
            LevyMeasure1D::Sum { parts } => {
                let mut total = 0.0;
                for p in parts {
                    total += p.laplace_with(b, tol)?;
                }
                Ok(total)
            }
            LevyMeasure1D::Scaled { factor, weight, base } => Ok(weight * base.laplace_with(b * factor, tol)?),
            LevyMeasure1D::Density { .. } => {
                // decade cuts between 1 and the kink of H(b v) at v = 1/b
                let kink = 1.0 / b.abs();
                let (lo, hi) = if kink > 1.0 { (1.0, kink) } else { (kink, 1.0) };
                let mut edges = vec![0.0];
                let mut e = lo;
                while e < hi * (1.0 - 1e-9) {
                    edges.push(e);
                    e *= 10.0;
                }
                edges.extend([hi, f64::INFINITY]);
                // J(b) can sit far below the absolute floor as b -> 0
                let seg_tol = Tolerance {
                    abs: tol.abs.min(1e-300),
                    ..tol
                };
                let mut j = 0.0;
                for w in edges.windows(2) {
                    j += self.integrate(|v| h_func(b * v), w[0], w[1], seg_tol)?;
                }
                Ok(j.max(0.0))
            }
        }
    }

    /// Whether `int_1^inf e^{s v} rho(dv)` is finite.
    pub fn has_exponential_moment(&self, s: f64) -> bool {
        if s <= 0.0 {
            return true;
        }
        match self {
            LevyMeasure1D::Stable { scale, .. } => *scale == 0.0,
            LevyMeasure1D::Atoms { .. } => true,
            LevyMeasure1D::Sum { parts } => parts.iter().all(|p| p.has_exponential_moment(s)),
            LevyMeasure1D::Scaled { factor, weight, base } => *weight == 0.0 || base.has_exponential_moment(s * factor),
            LevyMeasure1D::Density {
                density, support_hi, ..
            } => support_hi.is_some() || density.exponential_moment_bound() > s,
        }
    }

    /// Supremum of the support, `inf` when unbounded, 0 for the zero measure.
    pub fn support_sup(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        match self {
            LevyMeasure1D::Stable { .. } => f64::INFINITY,
            LevyMeasure1D::Atoms { atoms } => atoms.iter().filter(|a| a.1 > 0.0).map(|a| a.0).fold(0.0, f64::max),
            LevyMeasure1D::Sum { parts } => parts.iter().map(|p| p.support_sup()).fold(0.0, f64::max),
            LevyMeasure1D::Scaled { factor, base, .. } => factor * base.support_sup(),
            LevyMeasure1D::Density { support_hi, .. } => support_hi.unwrap_or(f64::INFINITY),
        }
    }

    /// Whether `int_0^1 v rho(dv)` is finite.
    pub fn has_finite_variation(&self) -> bool {
        if self.is_zero() {
            return true;
        }
        match self {
            LevyMeasure1D::Stable { .. } => false,
            LevyMeasure1D::Atoms { .. } => true,
            LevyMeasure1D::Sum { parts } => parts.iter().all(|p| p.has_finite_variation()),
            LevyMeasure1D::Scaled { base, .. } => base.has_finite_variation(),
            LevyMeasure1D::Density { density, variation, .. } => match (variation, density.variation()) {
                (VariationHint::Finite, _) | (VariationHint::Unknown, VariationHint::Finite) => true,
                (VariationHint::Infinite, _) | (VariationHint::Unknown, VariationHint::Infinite) => false,
                (VariationHint::Unknown, VariationHint::Unknown) => self.numeric_small_first_moment_finite(),
            },
        }
    }

    /// Decade test on `int_eps^1 v rho(dv)`: the increments over successive
    /// decades must die out for the integral to converge.
    fn numeric_small_first_moment_finite(&self) -> bool {
        let tol = Tolerance::new(1e-14, 1e-10);
        let mut prev: Option<f64> = None;
        let mut last_increment = f64::INFINITY;
        let mut total = 0.0;
        for k in (2..=14).step_by(2) {
            let eps = 10f64.powi(-k);
            let Ok(val) = self.integrate(|v| v, eps, 1.0, tol) else {
                return false;
            };
            if let Some(p) = prev {
                last_increment = val - p;
            }
            prev = Some(val);
            total = val;
        }
        last_increment <= 1e-6 * (1.0 + total)
    }

    /// `int_{(0, inf)} v rho(dv)`, `None` when infinite.
    pub fn first_moment(&self) -> Option<f64> {
        if self.is_zero() {
            return Some(0.0);
        }
        if !self.has_finite_variation() {
            return None;
        }
        let small = self.integrate(|v| v, 0.0, 1.0, Tolerance::new(1e-14, 1e-10)).ok()?;
        Some(small + self.tail_first_moment(1.0).ok()?)
    }

    /// Lebesgue density at `v > 0`; `None` when the measure has atoms.
    pub fn density_at(&self, v: f64) -> Option<f64> {
        if self.is_zero() || v <= 0.0 {
            return Some(0.0);
        }
        match self {
            LevyMeasure1D::Stable { alpha, scale } => Some(scale * v.powf(-1.0 - alpha)),
            LevyMeasure1D::Density {
                density, support_hi, ..
            } => Some(if support_hi.is_some_and(|h| v > h) {
                0.0
            } else {
                density.eval(v)
            }),
            LevyMeasure1D::Atoms { .. } => None,
            LevyMeasure1D::Sum { parts } => parts.iter().map(|p| p.density_at(v)).sum(),
            LevyMeasure1D::Scaled { factor, weight, base } => Some(weight / factor * base.density_at(v / factor)?),
        }
    }

    /// `rho((eps, inf))`.
    pub fn tail_mass(&self, eps: f64) -> Result<f64> {
        match self {
            LevyMeasure1D::Stable { alpha, scale } => Ok(scale * eps.powf(-alpha) / alpha),
            LevyMeasure1D::Sum { parts } => parts.iter().map(|p| p.tail_mass(eps)).sum(),
            LevyMeasure1D::Scaled { factor, weight, base } => Ok(weight * base.tail_mass(eps / factor)?),
            _ => self.integrate(|_| 1.0, eps, f64::INFINITY, Tolerance::new(1e-14, 1e-10)),
        }
    }

    /// `int_{(eps, inf)} v rho(dv)`.
    pub fn tail_first_moment(&self, eps: f64) -> Result<f64> {
        match self {
            LevyMeasure1D::Stable { alpha, scale } => Ok(scale * eps.powf(1.0 - alpha) / (alpha - 1.0)),
            LevyMeasure1D::Sum { parts } => parts.iter().map(|p| p.tail_first_moment(eps)).sum(),
            LevyMeasure1D::Scaled { factor, weight, base } => {
                Ok(weight * factor * base.tail_first_moment(eps / factor)?)
            }
            _ => self.integrate(|v| v, eps, f64::INFINITY, Tolerance::new(1e-14, 1e-10)),
        }
    }

    /// `int_{(0, eps]} v^2 rho(dv)`.
    pub fn small_second_moment(&self, eps: f64) -> Result<f64> {
        match self {
            LevyMeasure1D::Stable { alpha, scale } => Ok(scale * eps.powf(2.0 - alpha) / (2.0 - alpha)),
            LevyMeasure1D::Sum { parts } => parts.iter().map(|p| p.small_second_moment(eps)).sum(),
            LevyMeasure1D::Scaled { factor, weight, base } => {
                Ok(weight * factor * factor * base.small_second_moment(eps / factor)?)
            }
            _ => self.integrate(|v| v * v, 0.0, eps, Tolerance::new(1e-16, 1e-10)),
        }
    }

    /// `int_{(1, inf)} (v - 1) rho(dv)`.
    pub fn large_jump_excess(&self) -> Result<f64> {
        Ok(self.tail_first_moment(1.0)? - self.tail_mass(1.0)?)
    }
}
