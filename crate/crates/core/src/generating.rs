//! Generating pairs `(G, Z)`: projection triplets, condition checks,
//! canonical stable forms, the plane classifier and example families.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{self, PowerTerm};
use crate::laplace::{check_jump_support, projection_laplace_with};
use crate::measure::LevyMeasure1D;
use crate::model::{Coordinate, GFunction, LevyModel, Noise, ThreeDParams};
use crate::quad::Tolerance;
use crate::regvar;
use crate::special::stable_constant;

/// Linearity verdict threshold on the decomposition residual.
pub const LINEAR_TOL: f64 = 1e-6;
/// Above this residual the pair is rejected outright.
pub const NONLINEAR_TOL: f64 = 1e-3;
pub const MERGE_TOL: f64 = 0.01;
const ZERO_TOL: f64 = 1e-12;

fn projection_tol() -> Tolerance {
    Tolerance::new(1e-15, 1e-12)
}

/// `F(x) = a x + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    pub a: f64,
    pub b: f64,
}

impl DriftSpec {
    pub fn eval(&self, x: f64) -> f64 {
        self.a * x + self.b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratingPair {
    pub model: LevyModel,
    pub gfun: GFunction,
    pub drift: DriftSpec,
}

impl GeneratingPair {
    pub fn new(model: LevyModel, gfun: GFunction, drift: DriftSpec) -> Result<Self> {
        if gfun.dim() != model.dim() {
            return Err(Error::InvalidInput(format!(
                "G has dimension {}, noise has dimension {}",
                gfun.dim(),
                model.dim()
            )));
        }
        gfun.validate()?;
        if !(drift.b >= 0.0) || !drift.a.is_finite() {
            return Err(Error::InvalidInput(format!(
                "drift needs finite a and b >= 0, got {drift:?}"
            )));
        }
        Ok(GeneratingPair { model, gfun, drift })
    }
}

/// `J_{Z^{G(x)}}(b) = c b^2 x + J_{nu0}(b) + x J_mu(b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionTriplet {
    pub c: f64,
    pub nu0: LevyMeasure1D,
    pub mu: LevyMeasure1D,
}

impl ProjectionTriplet {
    pub fn laplace_mu(&self, b: f64) -> Result<f64> {
        self.mu.laplace(b)
    }

    pub fn laplace_nu0(&self, b: f64) -> Result<f64> {
        self.nu0.laplace(b)
    }

    /// Triplet of the canonical stable form.
    pub fn from_canonical(cf: &CanonicalForm) -> Result<Self> {
        let (c, mu_terms) = split_wiener(cf);
        let parts = mu_terms
            .iter()
            .map(|t| LevyMeasure1D::stable_with_laplace_coef(t.alpha, t.eta))
            .collect::<Result<Vec<_>>>()?;
        Ok(ProjectionTriplet {
            c,
            nu0: LevyMeasure1D::zero(),
            mu: LevyMeasure1D::Sum { parts },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub x_grid: Vec<f64>,
    pub b_grid: Vec<f64>,
    /// Fitted `c b^2 + J_mu(b)` per `b`.
    pub slopes: Vec<f64>,
    /// Fitted `J_{nu0}(b)` per `b`.
    pub intercepts: Vec<f64>,
    /// Largest relative deviation from the per-`b` straight line.
    pub residual: f64,
    pub linear: bool,
    /// `<Q G(0), G(0)> / 2`, a Gaussian part surviving at `x = 0`.
    pub gaussian_at_zero: f64,
}

pub fn default_x_grid() -> Vec<f64> {
    (-6..=3).map(|k| 2f64.powi(k)).collect()
}

pub fn default_b_grid() -> Vec<f64> {
    (-4..=4).map(|k| 2f64.powi(k)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Projection samples `J_{Z^{G(x)}}(b)` fitted by `slope(b) x + intercept(b)`.
pub fn projection_fit(pair: &GeneratingPair, x_grid: &[f64], b_grid: &[f64]) -> Result<DecompositionReport> {
    if x_grid.len() < 3 {
        return Err(Error::InvalidInput("decomposition needs at least 3 x points".into()));
    }
    let gs: Vec<Vec<f64>> = x_grid.iter().map(|&x| pair.gfun.eval(x)).collect();
    let n = x_grid.len() as f64;
    let mx = x_grid.iter().sum::<f64>() / n;
    let sxx: f64 = x_grid.iter().map(|x| (x - mx) * (x - mx)).sum();
    let mut slopes = Vec::with_capacity(b_grid.len());
    let mut intercepts = Vec::with_capacity(b_grid.len());
    let mut residual = 0.0f64;
    for &b in b_grid {
        let ys = gs
            .iter()
            .map(|g| projection_laplace_with(&pair.model, g, b, projection_tol()))
            .collect::<Result<Vec<f64>>>()?;
        let my = ys.iter().sum::<f64>() / n;
        let sxy: f64 = x_grid.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let scale = ys.iter().fold(0.0f64, |m, y| m.max(y.abs()));
        if scale > 0.0 {
            for (x, y) in x_grid.iter().zip(&ys) {
                residual = residual.max((y - slope * x - intercept).abs() / scale);
            }
        }
        slopes.push(slope);
        intercepts.push(intercept);
    }
    let g0 = pair.gfun.eval(0.0);
    Ok(DecompositionReport {
        x_grid: x_grid.to_vec(),
        b_grid: b_grid.to_vec(),
        slopes,
        intercepts,
        residual,
        linear: residual < LINEAR_TOL,
        gaussian_at_zero: 0.5 * pair.model.q_form(&g0, &g0),
    })
}

fn wrap_sum(mut v: Vec<LevyMeasure1D>) -> LevyMeasure1D {
    if v.len() == 1 {
        v.pop().unwrap()
    } else {
        LevyMeasure1D::Sum { parts: v }
    }
}

/// `nu_{G(0)}`: image of the jump measure under `y -> <G(0), y>` on `(0, inf)`.
pub fn nu0_measure(pair: &GeneratingPair) -> LevyMeasure1D {
    let g0 = pair.gfun.eval(0.0);
    let parts = pair
        .model
        .rays()
        .iter()
        .filter_map(|ray| {
            let scale = ray.direction.iter().map(|v| v * v).sum::<f64>().sqrt();
            let s0 = dot(&g0, ray.direction);
            (s0 > ZERO_TOL * scale * (1.0 + s0.abs())).then(|| ray.measure.pushforward(s0, ray.weight))
        })
        .collect();
    wrap_sum(parts)
}

/// Exact triplet measures from the ray structure of the noise: rays with
/// `<G(0), xi> > 0` and constant projection feed `nu0`, rays with
/// `<G(0), xi> = 0` feed `mu` through their image at `x = 1`.
pub fn triplet_measures(pair: &GeneratingPair) -> Result<ProjectionTriplet> {
    let g0 = pair.gfun.eval(0.0);
    let g1 = pair.gfun.eval(1.0);
    let c = 0.5 * (pair.model.q_form(&g1, &g1) - pair.model.q_form(&g0, &g0));
    let mut nu0 = Vec::new();
    let mut mu = Vec::new();
    for ray in pair.model.rays() {
        let scale = ray.direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        let s0 = dot(&g0, ray.direction);
        let s1 = dot(&g1, ray.direction);
        let tol = ZERO_TOL * scale * (1.0 + s0.abs().max(s1.abs()));
        if s0.abs() <= tol {
            if s1 > tol {
                mu.push(ray.measure.pushforward(s1, ray.weight));
            }
        } else if (s1 - s0).abs() <= tol {
            if s0 > 0.0 {
                nu0.push(ray.measure.pushforward(s0, ray.weight));
            }
        } else {
            return Err(Error::Constraint(format!(
                "jump ray {:?} moves with x but is nonzero at x = 0; the triplet measures are not separable",
                ray.direction
            )));
        }
    }
    Ok(ProjectionTriplet {
        c: c.max(0.0),
        nu0: wrap_sum(nu0),
        mu: wrap_sum(mu),
    })
}

/// Least-squares decomposition of the projection exponents plus the exact
/// triplet measures; errors when the projection is clearly not linear in `x`.
pub fn decompose_projection(
    pair: &GeneratingPair,
    x_grid: &[f64],
    b_grid: &[f64],
) -> Result<(ProjectionTriplet, DecompositionReport)> {
    let report = projection_fit(pair, x_grid, b_grid)?;
    if report.residual > NONLINEAR_TOL {
        return Err(Error::Nonlinearity {
            residual: report.residual,
        });
    }
    Ok((triplet_measures(pair)?, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub ok: bool,
    pub detail: String,
}

impl Condition {
    fn new(ok: bool, detail: impl Into<String>) -> Self {
        Condition {
            ok,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub jumps_nonneg: Condition,
    pub nu0_finite_variation: Condition,
    pub linear_in_x: Condition,
    pub drift_bound_ok: Condition,
    pub residual: Option<f64>,
}

impl ConditionReport {
    pub fn all_ok(&self) -> bool {
        self.jumps_nonneg.ok && self.nu0_finite_variation.ok && self.linear_in_x.ok && self.drift_bound_ok.ok
    }

    /// Diagnostics of the failing conditions.
    pub fn failures(&self) -> Vec<String> {
        [
            &self.jumps_nonneg,
            &self.nu0_finite_variation,
            &self.linear_in_x,
            &self.drift_bound_ok,
        ]
        .iter()
        .filter(|c| !c.ok)
        .map(|c| c.detail.clone())
        .collect()
    }
}

pub fn validate_generating(pair: &GeneratingPair) -> ConditionReport {
    validate_generating_on(pair, &default_x_grid(), &default_b_grid())
}

pub fn validate_generating_on(pair: &GeneratingPair, x_grid: &[f64], b_grid: &[f64]) -> ConditionReport {
    let mut worst = f64::INFINITY;
    let mut worst_x = 0.0;
    for &x in std::iter::once(&0.0).chain(x_grid) {
        let r = check_jump_support(&pair.model, &pair.gfun.eval(x));
        if r.min_inner < worst {
            worst = r.min_inner;
            worst_x = x;
        }
        if !r.all_nonneg {
            worst = r.min_inner;
            worst_x = x;
            break;
        }
    }
    let jumps_ok = worst >= -1e-12;
    let jumps_nonneg = Condition::new(
        jumps_ok,
        if jumps_ok {
            "projections <G(x), Z> have nonnegative jumps".to_string()
        } else {
            format!("projection <G(x), Z> has negative jumps at x = {worst_x} (normalized inner product {worst:.3e})")
        },
    );

    let nu0 = nu0_measure(pair);
    let g0 = pair.gfun.eval(0.0);
    let gauss0 = 0.5 * pair.model.q_form(&g0, &g0);
    let nu0_finite_variation = if gauss0 > ZERO_TOL {
        Condition::new(
            false,
            format!("Gaussian part <QG(0),G(0)>/2 = {gauss0:e} survives at x = 0; G(0)=0 is required along the Wiener directions"),
        )
    } else if nu0.has_finite_variation() {
        Condition::new(true, "nu_{G(0)} has finite variation")
    } else {
        Condition::new(
            false,
            "nu_{G(0)} has infinite variation: noise of infinite variation requires G(0)=0 along its jump directions",
        )
    };

    let fit = projection_fit(pair, x_grid, b_grid);
    let (linear_in_x, residual) = match &fit {
        Ok(r) => (
            Condition::new(
                r.linear,
                format!(
                    "J_{{Z^{{G(x)}}}}(b) {} affine in x (relative residual {:.3e})",
                    if r.linear { "is" } else { "is not" },
                    r.residual
                ),
            ),
            Some(r.residual),
        ),
        Err(e) => (
            Condition::new(false, format!("projection exponent not evaluable: {e}")),
            None,
        ),
    };

    let drift_bound_ok = match nu0.large_jump_excess() {
        Ok(excess) => {
            let ok = pair.drift.b >= excess - 1e-12;
            Condition::new(
                ok,
                format!(
                    "drift b = {} {} int_(1,inf)(v-1) nu_{{G(0)}}(dv) = {excess}",
                    pair.drift.b,
                    if ok { ">=" } else { "<" }
                ),
            )
        }
        Err(e) => Condition::new(false, format!("drift bound not evaluable: {e}")),
    };

    ConditionReport {
        jumps_nonneg,
        nu0_finite_variation,
        linear_in_x,
        drift_bound_ok,
        residual,
    }
}

/// `J_{Z^{G(x)}}(b) = x sum_k eta_k b^{alpha_k}`, `alpha` descending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalForm {
    pub terms: Vec<PowerTerm>,
}

impl CanonicalForm {
    pub fn new(mut terms: Vec<PowerTerm>) -> Result<Self> {
        terms.sort_by(|a, b| b.alpha.total_cmp(&a.alpha));
        for t in &terms {
            if !(t.alpha > 1.0 && t.alpha <= 2.0) || !(t.eta > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "canonical terms need alpha in (1, 2] and eta > 0, got {t:?}"
                )));
            }
        }
        if terms.windows(2).any(|w| w[0].alpha - w[1].alpha < MERGE_TOL) {
            return Err(Error::InvalidInput("canonical exponents must be distinct".into()));
        }
        if terms.is_empty() {
            return Err(Error::InvalidInput("canonical form needs at least one term".into()));
        }
        Ok(CanonicalForm { terms })
    }

    pub fn g(&self) -> usize {
        self.terms.len()
    }

    pub fn slope(&self, b: f64) -> f64 {
        self.terms.iter().map(|t| t.eta * b.powf(t.alpha)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalReport {
    pub form: CanonicalForm,
    pub fit_residual: f64,
    pub b_grid: Vec<f64>,
    pub observed: Vec<f64>,
    pub fitted: Vec<f64>,
}

pub fn canonicalize(pair: &GeneratingPair, x_small: &[f64], b_grid: &[f64]) -> Result<CanonicalForm> {
    Ok(canonicalize_with_report(pair, x_small, b_grid)?.form)
}

pub fn canonicalize_with_report(pair: &GeneratingPair, x_small: &[f64], b_grid: &[f64]) -> Result<CanonicalReport> {
    let (triplet, report) = decompose_projection(pair, x_small, b_grid)?;
    if !triplet.nu0.is_zero() || report.gaussian_at_zero > ZERO_TOL {
        return Err(Error::Constraint(
            "canonical form needs the G(0)=0 regime (nu_{G(0)} = 0); mixed regimes are reported, not canonicalized"
                .into(),
        ));
    }
    let max_terms = pair.model.dim() + usize::from(pair.model.q().iter().any(|&v| v != 0.0));
    let fit = fit::fit_power_sum(b_grid, &report.slopes, max_terms, 1e-6, 1e-4)?;
    let fitted = b_grid.iter().map(|&b| fit.eval(b)).collect();
    Ok(CanonicalReport {
        form: CanonicalForm::new(fit.terms)?,
        fit_residual: fit.residual,
        b_grid: b_grid.to_vec(),
        observed: report.slopes,
        fitted,
    })
}

/// Separates a quadratic term as the Wiener coefficient `c`.
pub fn split_wiener(cf: &CanonicalForm) -> (f64, Vec<PowerTerm>) {
    let mut c = 0.0;
    let mut rest = Vec::new();
    for t in &cf.terms {
        if t.alpha >= 2.0 - MERGE_TOL {
            c += t.eta;
        } else {
            rest.push(*t);
        }
    }
    (c, rest)
}

/// `d_k Z_k` term of the canonical equation; `alpha = 2` means a unit
/// Brownian motion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdeTerm {
    pub alpha: f64,
    pub d: f64,
}

/// `dR = (aR + b) dt + sum_k d_k R^{1/alpha_k} dZ_k` with unit-scale
/// independent `Z_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalSde {
    pub drift: DriftSpec,
    pub terms: Vec<SdeTerm>,
}

impl CanonicalSde {
    pub fn to_pair(&self) -> Result<GeneratingPair> {
        let coords = self
            .terms
            .iter()
            .map(|t| {
                if t.alpha >= 2.0 {
                    Coordinate {
                        measure: LevyMeasure1D::zero(),
                        q_ii: 1.0,
                    }
                } else {
                    Coordinate {
                        measure: LevyMeasure1D::stable(t.alpha, 1.0),
                        q_ii: 0.0,
                    }
                }
            })
            .collect();
        let model = LevyModel::independent(coords)?;
        let g = GFunction::diagonal_powers(&self.terms.iter().map(|t| (t.d, t.alpha)).collect::<Vec<_>>());
        GeneratingPair::new(model, g, self.drift)
    }
}

pub fn synthesize_canonical_equation(cf: &CanonicalForm, drift: DriftSpec) -> Result<CanonicalSde> {
    let terms = cf
        .terms
        .iter()
        .map(|t| {
            if t.alpha >= 2.0 - MERGE_TOL {
                // q = 1: J = d^2 x b^2 / 2
                Ok(SdeTerm {
                    alpha: 2.0,
                    d: (2.0 * t.eta).sqrt(),
                })
            } else {
                Ok(SdeTerm {
                    alpha: t.alpha,
                    d: (t.eta / stable_constant(t.alpha)?).powf(1.0 / t.alpha),
                })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CanonicalSde { drift, terms })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlaneCase {
    Ia,
    Ib,
    II,
    NotGenerating,
}

impl PlaneCase {
    pub fn tag(&self) -> &'static str {
        match self {
            PlaneCase::Ia => "Ia",
            PlaneCase::Ib => "Ib",
            PlaneCase::II => "II",
            PlaneCase::NotGenerating => "not_generating",
        }
    }
}

/// Laplace exponent of coordinate `i` of an independent model.
fn coordinate_exponent(model: &LevyModel, i: usize) -> Option<impl Fn(f64) -> f64 + '_> {
    match model.noise() {
        Noise::Independent { coords } => {
            let c = &coords[i];
            Some(move |b: f64| 0.5 * c.q_ii * b * b + c.measure.laplace(b).unwrap_or(f64::NAN))
        }
        _ => None,
    }
}

pub fn classify_plane(pair: &GeneratingPair) -> PlaneCase {
    classify_plane_on(pair, &default_x_grid(), &dense_b_grid())
}

/// Log grid `2^{-6}, 2^{-5.5}, ..., 2^6` used for exponent fitting.
pub fn dense_b_grid() -> Vec<f64> {
    (-12..=12).map(|k| 2f64.powf(k as f64 / 2.0)).collect()
}

pub fn classify_plane_on(pair: &GeneratingPair, x_grid: &[f64], b_grid: &[f64]) -> PlaneCase {
    if pair.model.dim() != 2 || !matches!(pair.model.noise(), Noise::Independent { .. }) {
        return PlaneCase::NotGenerating;
    }
    let report = validate_generating_on(pair, x_grid, b_grid);
    if !report.all_ok() {
        return PlaneCase::NotGenerating;
    }
    let Ok(cf) = canonicalize(pair, x_grid, b_grid) else {
        return PlaneCase::NotGenerating;
    };
    let mut idx = [0.0; 2];
    let mut coef = [0.0; 2];
    for (i, (ix, cc)) in idx.iter_mut().zip(coef.iter_mut()).enumerate() {
        let Some(j) = coordinate_exponent(&pair.model, i) else {
            return PlaneCase::NotGenerating;
        };
        let Ok(est) = regvar::rv_index_from_laplace(&j, 2.0) else {
            return PlaneCase::NotGenerating;
        };
        *ix = est.alpha;
        *cc = j(1.0);
    }
    let ratios: Vec<f64> = x_grid
        .iter()
        .map(|&x| {
            let g = pair.gfun.eval(x);
            g[1] / g[0]
        })
        .collect();
    let r0 = ratios[0];
    let proportional = ratios.iter().all(|r| (r - r0).abs() <= 1e-8 * r0.abs().max(1e-300));
    match cf.g() {
        1 => {
            let a = cf.terms[0].alpha;
            if proportional {
                PlaneCase::Ia
            } else if (idx[0] - a).abs() < MERGE_TOL && (idx[1] - a).abs() < MERGE_TOL {
                PlaneCase::Ib
            } else {
                PlaneCase::NotGenerating
            }
        }
        2 => {
            // each coordinate carries the term matching its own index
            let matches = (0..2).all(|i| {
                let Some(t) = cf.terms.iter().find(|t| (t.alpha - idx[i]).abs() < MERGE_TOL) else {
                    return false;
                };
                x_grid.iter().all(|&x| {
                    let want = (t.eta / coef[i] * x).powf(1.0 / t.alpha);
                    let got = pair.gfun.eval(x)[i];
                    (got - want).abs() <= 1e-6 * want.abs().max(1e-300)
                })
            });
            if matches && (idx[0] - idx[1]).abs() >= MERGE_TOL {
                PlaneCase::II
            } else {
                PlaneCase::NotGenerating
            }
        }
        _ => PlaneCase::NotGenerating,
    }
}

/// `(b x - c y^{alpha1})^{1/alpha1} < (a x - d y^{alpha2})^{1/alpha2}` on a
/// `10^4`-point grid of `y`.
pub fn plane_inequality_check(a: f64, b: f64, c: f64, d: f64, alpha1: f64, alpha2: f64, x: f64) -> bool {
    const N: usize = 10_000;
    let y_max = ((b / c) * x).powf(1.0 / alpha1).min(((a / d) * x).powf(1.0 / alpha2));
    (0..N).all(|i| {
        let y = y_max * i as f64 / (N - 1) as f64;
        let lhs = (b * x - c * y.powf(alpha1)).max(0.0).powf(1.0 / alpha1);
        let rhs = (a * x - d * y.powf(alpha2)).max(0.0).powf(1.0 / alpha2);
        lhs < rhs
    })
}

/// Coordinate with Laplace exponent `sum_k coef_k b^{alpha_k}`; an exponent
/// of 2 becomes a Wiener part.
fn power_coordinate(parts: &[(f64, f64)]) -> Result<Coordinate> {
    let mut q_ii = 0.0;
    let mut measures = Vec::new();
    for &(alpha, coef) in parts {
        if alpha >= 2.0 {
            q_ii += 2.0 * coef;
        } else {
            measures.push(LevyMeasure1D::stable_with_laplace_coef(alpha, coef)?);
        }
    }
    let measure = match measures.len() {
        0 => LevyMeasure1D::zero(),
        1 => measures.pop().unwrap(),
        _ => LevyMeasure1D::Sum { parts: measures },
    };
    Ok(Coordinate { measure, q_ii })
}

/// The three-coordinate family in which `G_1, G_2` are determined by `G_3`.
pub fn build_example_3d(g3: GFunction, params: ThreeDParams, drift: DriftSpec) -> Result<GeneratingPair> {
    if g3.dim() != 1 {
        return Err(Error::InvalidInput("G_3 must be scalar".into()));
    }
    let gf = GFunction::ThreeD {
        g3: Box::new(g3.clone()),
        params,
    };
    gf.validate()?;
    let grid = std::iter::once(0.0).chain((0..=140).map(|k| 10f64.powf(-4.0 + 0.05 * k as f64)));
    for x in grid {
        let v = g3.eval(x)[0];
        let bound = params.g3_bound(x);
        if !(v >= 0.0) || v > bound * (1.0 + 1e-12) {
            return Err(Error::Constraint(format!(
                "G_3({x}) = {v} violates 0 <= G_3 <= {bound}"
            )));
        }
    }
    let p = params;
    let coords = vec![
        power_coordinate(&[(p.alpha1, p.gamma1)])?,
        power_coordinate(&[(p.alpha2, p.gamma2)])?,
        power_coordinate(&[(p.alpha1, p.gamma3), (p.alpha2, p.gamma3_tilde)])?,
    ];
    GeneratingPair::new(LevyModel::independent(coords)?, gf, drift)
}

/// Scalar test function with its first two derivatives.
#[derive(Clone)]
pub struct TestFunction {
    pub f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub df: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub d2f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl TestFunction {
    /// `e^{-lambda x}`.
    pub fn exponential(lambda: f64) -> Self {
        TestFunction {
            f: Arc::new(move |x| (-lambda * x).exp()),
            df: Arc::new(move |x| -lambda * (-lambda * x).exp()),
            d2f: Arc::new(move |x| lambda * lambda * (-lambda * x).exp()),
        }
    }

    pub fn constant(c: f64) -> Self {
        TestFunction {
            f: Arc::new(move |_| c),
            df: Arc::new(|_| 0.0),
            d2f: Arc::new(|_| 0.0),
        }
    }

    /// `f(x+v) - f(x) - f'(x) v = int_0^v (v-u) f''(x+u) du`, evaluated in
    /// integral form for small `v` where the difference cancels.
    fn taylor_remainder(&self, x: f64, v: f64) -> f64 {
        if v < 0.05 {
            const NODES: [f64; 5] = [
                0.0,
                -0.538_469_310_105_683_1,
                0.538_469_310_105_683_1,
                -0.906_179_845_938_664,
                0.906_179_845_938_664,
            ];
            const WEIGHTS: [f64; 5] = [
                0.568_888_888_888_888_9,
                0.478_628_670_499_366_5,
                0.478_628_670_499_366_5,
                0.236_926_885_056_189_1,
                0.236_926_885_056_189_1,
            ];
            let h = 0.5 * v;
            NODES
                .iter()
                .zip(WEIGHTS)
                .map(|(t, w)| {
                    let u = h * (1.0 + t);
                    w * (v - u) * (self.d2f)(x + u)
                })
                .sum::<f64>()
                * h
        } else {
            (self.f)(x + v) - (self.f)(x) - (self.df)(x) * v
        }
    }
}

/// Generator of the short rate applied to `f` at `x`.
pub fn generator_apply(triplet: &ProjectionTriplet, drift: DriftSpec, f: &TestFunction, x: f64) -> Result<f64> {
    let tol = Tolerance::new(1e-300, 1e-11);
    let fx = (f.f)(x);
    let dfx = (f.df)(x);
    let excess = triplet.nu0.large_jump_excess()? + x * triplet.mu.large_jump_excess()?;
    let jump = |m: &LevyMeasure1D| -> Result<f64> {
        if m.is_zero() {
            return Ok(0.0);
        }
        let small = m.integrate(|v| f.taylor_remainder(x, v), 0.0, 1.0, tol)?;
        let large = m.integrate(|v| (f.f)(x + v) - fx - dfx, 1.0, f64::INFINITY, tol)?;
        Ok(small + large)
    };
    let mut total = triplet.c * x * (f.d2f)(x) + (drift.eval(x) - excess) * dfx + jump(&triplet.nu0)?;
    if x != 0.0 {
        total += x * jump(&triplet.mu)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RaySpec;
    use approx::assert_relative_eq;

    fn c15() -> f64 {
        stable_constant(1.5).unwrap()
    }

    pub(crate) fn example_2_2() -> GeneratingPair {
        let model = LevyModel::new(
            2,
            None,
            Noise::Custom {
                rays: vec![RaySpec {
                    direction: vec![1.0, -1.0],
                    measure: LevyMeasure1D::stable(1.5, 1.0),
                }],
            },
        )
        .unwrap();
        let g = GFunction::affine_power(&[(1.0, 1.0, 1.5), (1.0, -1.0, 1.5)]);
        GeneratingPair::new(model, g, DriftSpec { a: 0.0, b: 0.0 }).unwrap()
    }

    fn stable_pair(alphas: &[f64], drift: DriftSpec) -> GeneratingPair {
        let coords = alphas
            .iter()
            .map(|&a| Coordinate {
                measure: LevyMeasure1D::stable(a, 1.0),
                q_ii: 0.0,
            })
            .collect();
        let g = GFunction::diagonal_powers(&alphas.iter().map(|&a| (1.0, a)).collect::<Vec<_>>());
        GeneratingPair::new(LevyModel::independent(coords).unwrap(), g, drift).unwrap()
    }

    #[test]
    fn example_2_2_decomposes() {
        let pair = example_2_2();
        let (t, r) = decompose_projection(&pair, &default_x_grid(), &default_b_grid()).unwrap();
        assert_eq!(t.c, 0.0);
        assert!(t.nu0.is_zero());
        assert!(r.residual < 1e-12);
        for (b, s) in r.b_grid.iter().zip(&r.slopes) {
            assert_relative_eq!(*s, 2f64.powf(1.5) * c15() * b.powf(1.5), max_relative = 1e-12);
        }
        for i in &r.intercepts {
            assert!(i.abs() < 1e-12);
        }
        assert_relative_eq!(t.mu.laplace(1.0).unwrap(), 2f64.powf(1.5) * c15(), max_relative = 1e-14);
    }

    #[test]
    fn linear_g_with_stable_noise_is_rejected() {
        let model = LevyModel::independent(vec![Coordinate {
            measure: LevyMeasure1D::stable(1.5, 1.0),
            q_ii: 0.0,
        }])
        .unwrap();
        let pair = GeneratingPair::new(
            model,
            GFunction::affine_power(&[(0.0, 1.0, 1.0)]),
            DriftSpec { a: 0.0, b: 0.0 },
        )
        .unwrap();
        assert!(matches!(
            decompose_projection(&pair, &default_x_grid(), &default_b_grid()),
            Err(Error::Nonlinearity { .. })
        ));
    }

    #[test]
    fn validation_reports() {
        let ok = stable_pair(&[1.5, 1.3], DriftSpec { a: -0.5, b: 0.1 });
        assert!(validate_generating(&ok).all_ok());

        let model = LevyModel::independent(vec![
            Coordinate {
                measure: LevyMeasure1D::stable(1.5, 1.0),
                q_ii: 0.0,
            },
            Coordinate {
                measure: LevyMeasure1D::stable(1.5, 1.0),
                q_ii: 0.0,
            },
        ])
        .unwrap();
        let bad = GeneratingPair::new(
            model,
            GFunction::affine_power(&[(1.0, 1.0, 1.0), (0.0, 1.0, 1.0)]),
            DriftSpec { a: 0.0, b: 0.0 },
        )
        .unwrap();
        let r = validate_generating(&bad);
        assert!(!r.nu0_finite_variation.ok);
        assert!(r.nu0_finite_variation.detail.contains("G(0)=0"));

        // compound Poisson jumps of size 3 at G(0) = 1 need b >= 2
        let atoms = LevyModel::independent(vec![Coordinate {
            measure: LevyMeasure1D::atoms(vec![(3.0, 1.0)]),
            q_ii: 0.0,
        }])
        .unwrap();
        let vas = |b| {
            GeneratingPair::new(
                atoms.clone(),
                GFunction::affine_power(&[(1.0, 0.0, 1.0)]),
                DriftSpec { a: -1.0, b },
            )
            .unwrap()
        };
        assert!(!validate_generating(&vas(0.0)).drift_bound_ok.ok);
        assert!(validate_generating(&vas(2.0)).all_ok());
    }

    #[test]
    fn split_wiener_cases() {
        let cf = CanonicalForm::new(vec![
            PowerTerm { alpha: 2.0, eta: 0.3 },
            PowerTerm { alpha: 1.5, eta: 1.0 },
        ])
        .unwrap();
        assert_eq!(split_wiener(&cf), (0.3, vec![PowerTerm { alpha: 1.5, eta: 1.0 }]));
        let cf = CanonicalForm::new(vec![PowerTerm { alpha: 1.5, eta: 1.0 }]).unwrap();
        assert_eq!(split_wiener(&cf).0, 0.0);
        let cf = CanonicalForm::new(vec![PowerTerm { alpha: 2.0, eta: 0.7 }]).unwrap();
        assert_eq!(split_wiener(&cf), (0.7, vec![]));
    }

    #[test]
    fn synthesis_coefficients() {
        let d = |terms: Vec<PowerTerm>| {
            synthesize_canonical_equation(&CanonicalForm::new(terms).unwrap(), DriftSpec { a: 0.0, b: 0.0 }).unwrap()
        };
        assert_relative_eq!(
            d(vec![PowerTerm { alpha: 1.5, eta: c15() }]).terms[0].d,
            1.0,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            d(vec![PowerTerm {
                alpha: 1.5,
                eta: 2f64.powf(1.5) * c15()
            }])
            .terms[0]
                .d,
            2.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn canonicalize_single_stable() {
        let pair = stable_pair(&[1.5], DriftSpec { a: 0.0, b: 0.0 });
        let cf = canonicalize(&pair, &default_x_grid(), &dense_b_grid()).unwrap();
        assert_eq!(cf.g(), 1);
        assert!((cf.terms[0].alpha - 1.5).abs() < 1e-8);
        assert_relative_eq!(cf.terms[0].eta, c15(), max_relative = 1e-8);
    }

    #[test]
    fn canonicalize_wiener() {
        let model = LevyModel::independent(vec![Coordinate {
            measure: LevyMeasure1D::zero(),
            q_ii: 1.0,
        }])
        .unwrap();
        let pair = GeneratingPair::new(
            model,
            GFunction::affine_power(&[(0.0, 0.4, 2.0)]),
            DriftSpec { a: 0.0, b: 0.0 },
        )
        .unwrap();
        let cf = canonicalize(&pair, &default_x_grid(), &dense_b_grid()).unwrap();
        assert_eq!(cf.terms.len(), 1);
        assert_eq!(cf.terms[0].alpha, 2.0);
        assert_relative_eq!(cf.terms[0].eta, 0.08, max_relative = 1e-10);
    }

    #[test]
    fn inequality_check() {
        assert!(plane_inequality_check(1.0, 1.0, 1.0, 1.0, 1.8, 1.2, 1e6));
        assert!(!plane_inequality_check(1.0, 1.0, 1.0, 1.0, 1.8, 1.2, 1e-6));
    }

    #[test]
    fn generator_on_constants_vanishes() {
        let t = triplet_measures(&example_2_2()).unwrap();
        let g = generator_apply(&t, DriftSpec { a: -1.0, b: 0.3 }, &TestFunction::constant(1.0), 0.7).unwrap();
        assert_eq!(g, 0.0);
    }

    #[test]
    fn generator_on_exponentials() {
        let t = ProjectionTriplet {
            c: 0.0,
            nu0: LevyMeasure1D::zero(),
            mu: LevyMeasure1D::stable(1.5, 1.0),
        };
        let drift = DriftSpec { a: -0.5, b: 0.2 };
        for lam in [0.5, 1.0, 2.0, 5.0] {
            for x in [0.0, 0.1, 1.0, 10.0] {
                let got = generator_apply(&t, drift, &TestFunction::exponential(lam), x).unwrap();
                let f = (-lam * x).exp();
                let want = -drift.eval(x) * lam * f + x * c15() * lam.powf(1.5) * f;
                assert_relative_eq!(got, want, max_relative = 1e-8, epsilon = 1e-300);
            }
        }
    }

    #[test]
    fn three_d_family() {
        let p = ThreeDParams {
            gamma1: 1.0,
            gamma2: 1.0,
            gamma3: 1.0,
            gamma3_tilde: 1.0,
            eta1: 1.0,
            eta2: 1.0,
            alpha1: 1.8,
            alpha2: 1.3,
        };
        let zero = GFunction::PowerSum { dim: 1, terms: vec![] };
        assert!(build_example_3d(zero, p, DriftSpec { a: 0.0, b: 0.0 }).is_ok());
        let over = GFunction::PowerSum {
            dim: 1,
            terms: vec![crate::model::PowerTerm {
                coef: 2.0,
                alpha: 1.8,
                axis: 0,
            }],
        };
        assert!(matches!(
            build_example_3d(over, p, DriftSpec { a: 0.0, b: 0.0 }),
            Err(Error::Constraint(_))
        ));
    }
}
