//! Lévy noise models on `R^d` and diffusion-coefficient maps `G`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::LevyMeasure1D;

const UNIT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedDirection {
    pub xi: Vec<f64>,
    pub weight: f64,
}

/// `nu(A) = sum_j w_j int 1_A(r xi_j) gamma(dr)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphericalMeasure {
    pub directions: Vec<WeightedDirection>,
    pub radial: LevyMeasure1D,
}

impl SphericalMeasure {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.directions.is_empty() {
            return Err(Error::InvalidInput(
                "spherical measure needs at least one direction".into(),
            ));
        }
        for d in &self.directions {
            if d.xi.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "direction has length {}, model dimension is {dim}",
                    d.xi.len()
                )));
            }
            let norm = d.xi.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > UNIT_TOL {
                return Err(Error::InvalidInput(format!(
                    "direction {:?} is not a unit vector",
                    d.xi
                )));
            }
            if !(d.weight > 0.0 && d.weight.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "direction weight must be positive, got {}",
                    d.weight
                )));
            }
        }
        self.radial.validate()?;
        let tail = self.radial.tail_first_moment(1.0)?;
        if !tail.is_finite() {
            return Err(Error::InvalidInput(
                "radial measure must integrate r on (1, inf)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coordinate {
    pub measure: LevyMeasure1D,
    #[serde(default)]
    pub q_ii: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaySpec {
    pub direction: Vec<f64>,
    pub measure: LevyMeasure1D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Noise {
    Independent { coords: Vec<Coordinate> },
    Spherical { measure: SphericalMeasure },
    Custom { rays: Vec<RaySpec> },
}

/// A jump ray `{r * direction : r > 0}` carrying `weight * rho(dr)`.
#[derive(Debug, Clone, Copy)]
pub struct Ray<'a> {
    pub direction: &'a [f64],
    pub weight: f64,
    pub measure: &'a LevyMeasure1D,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LevyModelRaw {
    dim: usize,
    #[serde(default)]
    q: Option<Vec<Vec<f64>>>,
    noise: Noise,
}

/// Martingale Lévy noise `Z` on `R^d`: Gaussian covariance `Q` and jump
/// measure `nu`. The drift is implied by the martingale property.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LevyModelRaw", into = "LevyModelRaw")]
pub struct LevyModel {
    dim: usize,
    q: Vec<f64>,
    noise: Noise,
    axes: Vec<Vec<f64>>,
}

impl TryFrom<LevyModelRaw> for LevyModel {
    type Error = Error;
    fn try_from(raw: LevyModelRaw) -> Result<Self> {
        LevyModel::new(raw.dim, raw.q, raw.noise)
    }
}

impl From<LevyModel> for LevyModelRaw {
    fn from(m: LevyModel) -> Self {
        let q = match m.noise {
            Noise::Independent { .. } => None,
            _ => Some((0..m.dim).map(|i| m.q[i * m.dim..(i + 1) * m.dim].to_vec()).collect()),
        };
        LevyModelRaw {
            dim: m.dim,
            q,
            noise: m.noise,
        }
    }
}

impl LevyModel {
    /// For `independent` noise `q` must be absent or equal to `diag(q_ii)`.
    pub fn new(dim: usize, q: Option<Vec<Vec<f64>>>, noise: Noise) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("model dimension must be positive".into()));
        }
        let mut flat = vec![0.0; dim * dim];
        if let Some(rows) = &q {
            if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                return Err(Error::InvalidInput(format!("Q must be {dim}x{dim}")));
            }
            for (i, r) in rows.iter().enumerate() {
                flat[i * dim..(i + 1) * dim].copy_from_slice(r);
            }
        }
        match &noise {
            Noise::Independent { coords } => {
                if coords.len() != dim {
                    return Err(Error::InvalidInput(format!(
                        "independent noise has {} coordinates, model dimension is {dim}",
                        coords.len()
                    )));
                }
                let mut diag = vec![0.0; dim * dim];
                for (i, c) in coords.iter().enumerate() {
                    if !(c.q_ii >= 0.0 && c.q_ii.is_finite()) {
                        return Err(Error::InvalidInput(format!("q_ii must be >= 0, got {}", c.q_ii)));
                    }
                    diag[i * dim + i] = c.q_ii;
                    c.measure.validate()?;
                }
                if q.is_some() && flat.iter().zip(&diag).any(|(a, b)| (a - b).abs() > UNIT_TOL) {
                    return Err(Error::InvalidInput("independent noise needs Q = diag(q_ii)".into()));
                }
                flat = diag;
            }
            Noise::Spherical { measure } => measure.validate(dim)?,
            Noise::Custom { rays } => {
                for r in rays {
                    if r.direction.len() != dim {
                        return Err(Error::InvalidInput(format!(
                            "ray direction has length {}, model dimension is {dim}",
                            r.direction.len()
                        )));
                    }
                    if r.direction.iter().all(|&v| v == 0.0) {
                        return Err(Error::InvalidInput("ray direction must be nonzero".into()));
                    }
                    r.measure.validate()?;
                }
            }
        }
        validate_covariance(dim, &flat)?;
        let axes = (0..dim)
            .map(|i| {
                let mut e = vec![0.0; dim];
                e[i] = 1.0;
                e
            })
            .collect();
        Ok(LevyModel {
            dim,
            q: flat,
            noise,
            axes,
        })
    }

    pub fn independent(coords: Vec<Coordinate>) -> Result<Self> {
        LevyModel::new(coords.len(), None, Noise::Independent { coords })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major covariance.
    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn noise(&self) -> &Noise {
        &self.noise
    }

    /// `<Q u, w>`.
    pub fn q_form(&self, u: &[f64], w: &[f64]) -> f64 {
        let d = self.dim;
        self.q
            .chunks(d)
            .zip(u)
            .map(|(row, ui)| ui * row.iter().zip(w).map(|(q, wj)| q * wj).sum::<f64>())
            .sum()
    }

    /// Jump rays with nonzero mass.
    pub fn rays(&self) -> Vec<Ray<'_>> {
        match &self.noise {
            Noise::Independent { coords } => coords
                .iter()
                .zip(&self.axes)
                .filter(|(c, _)| !c.measure.is_zero())
                .map(|(c, e)| Ray {
                    direction: e,
                    weight: 1.0,
                    measure: &c.measure,
                })
                .collect(),
            Noise::Spherical { measure } => {
                if measure.radial.is_zero() {
                    return Vec::new();
                }
                measure
                    .directions
                    .iter()
                    .map(|d| Ray {
                        direction: &d.xi,
                        weight: d.weight,
                        measure: &measure.radial,
                    })
                    .collect()
            }
            Noise::Custom { rays } => rays
                .iter()
                .filter(|r| !r.measure.is_zero())
                .map(|r| Ray {
                    direction: &r.direction,
                    weight: 1.0,
                    measure: &r.measure,
                })
                .collect(),
        }
    }

    /// Lower-triangular `L` with `L L^T = Q`, tolerating semidefinite `Q`.
    pub fn covariance_factor(&self) -> Vec<f64> {
        let d = self.dim;
        let m = DMatrix::from_row_slice(d, d, &self.q);
        let eig = m.symmetric_eigen();
        // Q = V diag(l) V^T, factor V diag(sqrt(l)); not triangular but L L^T = Q
        let mut f = vec![0.0; d * d];
        for i in 0..d {
            for k in 0..d {
                let l = eig.eigenvalues[k].max(0.0).sqrt();
                f[i * d + k] = eig.eigenvectors[(i, k)] * l;
            }
        }
        f
    }
}

fn validate_covariance(dim: usize, q: &[f64]) -> Result<()> {
    for i in 0..dim {
        for j in 0..dim {
            let (a, b) = (q[i * dim + j], q[j * dim + i]);
            if !a.is_finite() || (a - b).abs() > UNIT_TOL * (1.0 + a.abs()) {
                return Err(Error::InvalidInput("Q must be symmetric and finite".into()));
            }
        }
    }
    let m = DMatrix::from_row_slice(dim, dim, q);
    let min_eig = m
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if min_eig < -1e-10 {
        return Err(Error::InvalidInput(format!(
            "Q must be nonnegative definite, smallest eigenvalue {min_eig:e}"
        )));
    }
    Ok(())
}

/// Programmatic `G`; not serializable.
#[derive(Clone)]
pub struct CustomG {
    pub dim: usize,
    pub f: Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>,
}

impl fmt::Debug for CustomG {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomG(dim = {})", self.dim)
    }
}

impl PartialEq for CustomG {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.f, &other.f)
    }
}

/// `G_axis(x) += coef * x^{1/alpha}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTerm {
    pub coef: f64,
    pub alpha: f64,
    pub axis: usize,
}

/// `c0 + c1 * x^{1/alpha}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinePowerCoord {
    pub c0: f64,
    pub c1: f64,
    pub alpha: f64,
}

/// Parameters of the three-coordinate family built from a free `G_3`.
/// `gamma*` are Laplace-exponent coefficients: `J_1(b) = gamma1 b^alpha1`,
/// `J_2(b) = gamma2 b^alpha2`, `J_3(b) = gamma3 b^alpha1 + gamma3_tilde b^alpha2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreeDParams {
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub gamma3_tilde: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub alpha1: f64,
    pub alpha2: f64,
}

impl ThreeDParams {
    /// Upper bound on `G_3(x)` keeping `G_1, G_2` real and nonnegative.
    pub fn g3_bound(&self, x: f64) -> f64 {
        (self.eta1 / self.gamma3 * x)
            .powf(1.0 / self.alpha1)
            .min((self.eta2 / self.gamma3_tilde * x).powf(1.0 / self.alpha2))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GFunction {
    PowerSum {
        dim: usize,
        terms: Vec<PowerTerm>,
    },
    AffinePower {
        coords: Vec<AffinePowerCoord>,
    },
    /// `coef * x^{1/alpha} * direction`.
    StableCone {
        direction: Vec<f64>,
        coef: f64,
        alpha: f64,
    },
    /// Piecewise linear through `(grid[j], values[j])`, constant beyond the ends.
    Tabulated {
        grid: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
    /// Scalar `coef * (x / (1 + x / knee))^{1/alpha}`.
    Saturating {
        coef: f64,
        alpha: f64,
        knee: f64,
    },
    /// `(G_1(x), ((eta x - c1 G_1(x)^alpha) / c2)^{1/alpha})` for scalar `G_1`.
    PlaneComplement {
        g1: Box<GFunction>,
        alpha: f64,
        eta: f64,
        c1: f64,
        c2: f64,
    },
    /// `(G_1, G_2, G_3)` with `G_1, G_2` determined by the scalar `G_3`.
    ThreeD {
        g3: Box<GFunction>,
        params: ThreeDParams,
    },
    #[serde(skip)]
    Custom(CustomG),
}

impl GFunction {
    pub fn custom<F: Fn(f64) -> Vec<f64> + Send + Sync + 'static>(dim: usize, f: F) -> Self {
        GFunction::Custom(CustomG { dim, f: Arc::new(f) })
    }

    pub fn affine_power(coords: &[(f64, f64, f64)]) -> Self {
        GFunction::AffinePower {
            coords: coords
                .iter()
                .map(|&(c0, c1, alpha)| AffinePowerCoord { c0, c1, alpha })
                .collect(),
        }
    }

    /// `G_k(x) = d_k x^{1/alpha_k}` on axis `k`.
    pub fn diagonal_powers(terms: &[(f64, f64)]) -> Self {
        GFunction::PowerSum {
            dim: terms.len(),
            terms: terms
                .iter()
                .enumerate()
                .map(|(axis, &(coef, alpha))| PowerTerm { coef, alpha, axis })
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            GFunction::PowerSum { dim, .. } => *dim,
            GFunction::AffinePower { coords } => coords.len(),
            GFunction::StableCone { direction, .. } => direction.len(),
            GFunction::Tabulated { values, .. } => values.first().map_or(0, |v| v.len()),
            GFunction::Saturating { .. } => 1,
            GFunction::PlaneComplement { .. } => 2,
            GFunction::ThreeD { .. } => 3,
            GFunction::Custom(c) => c.dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        match self {
            GFunction::PowerSum { dim, terms } => {
                for t in terms {
                    if t.axis >= *dim {
                        return bad(format!("power term axis {} out of range", t.axis));
                    }
                    if !(t.alpha > 0.0) || !t.coef.is_finite() {
                        return bad(format!("power term needs alpha > 0 and finite coef, got {t:?}"));
                    }
                }
            }
            GFunction::AffinePower { coords } => {
                if coords.is_empty() {
                    return bad("affine_power needs at least one coordinate".into());
                }
                if coords
                    .iter()
                    .any(|c| !(c.alpha > 0.0) || !c.c0.is_finite() || !c.c1.is_finite())
                {
                    return bad("affine_power needs alpha > 0 and finite coefficients".into());
                }
            }
            GFunction::StableCone { direction, alpha, coef } => {
                if direction.is_empty() || !(*alpha > 0.0) || !coef.is_finite() {
                    return bad("stable_cone needs a direction, alpha > 0 and finite coef".into());
                }
            }
            GFunction::Tabulated { grid, values } => {
                if grid.len() < 2 || grid.len() != values.len() {
                    return bad("tabulated G needs >= 2 grid points with one value each".into());
                }
                if grid.windows(2).any(|w| !(w[1] > w[0])) || grid[0] > 0.0 {
                    return bad("tabulated grid must be increasing and start at 0".into());
                }
                let d = values[0].len();
                if d == 0 || values.iter().any(|v| v.len() != d || v.iter().any(|x| !x.is_finite())) {
                    return bad("tabulated values must be finite vectors of equal length".into());
                }
            }
            GFunction::Saturating { alpha, knee, coef } => {
                if !(*alpha > 0.0 && *knee > 0.0) || !coef.is_finite() {
                    return bad("saturating G needs alpha > 0, knee > 0".into());
                }
            }
            GFunction::PlaneComplement { g1, alpha, eta, c1, c2 } => {
                if g1.dim() != 1 {
                    return bad("plane complement needs a scalar G_1".into());
                }
                if !(*alpha > 0.0 && *eta > 0.0 && *c1 > 0.0 && *c2 > 0.0) {
                    return bad("plane complement needs positive alpha, eta, c1, c2".into());
                }
                g1.validate()?;
            }
            GFunction::ThreeD { g3, params } => {
                if g3.dim() != 1 {
                    return bad("three-coordinate family needs a scalar G_3".into());
                }
                let p = params;
                if [p.gamma1, p.gamma2, p.gamma3, p.gamma3_tilde, p.eta1, p.eta2]
                    .iter()
                    .any(|v| !(*v > 0.0))
                {
                    return bad("three-coordinate family needs positive parameters".into());
                }
                if !(p.alpha1 <= 2.0 && p.alpha1 > p.alpha2 && p.alpha2 > 1.0) {
                    return bad("three-coordinate family needs 2 >= alpha1 > alpha2 > 1".into());
                }
                g3.validate()?;
            }
            GFunction::Custom(_) => {}
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        let x = x.max(0.0);
        match self {
            GFunction::PowerSum { dim, terms } => {
                let mut g = vec![0.0; *dim];
                for t in terms {
                    g[t.axis] += t.coef * x.powf(1.0 / t.alpha);
                }
                g
            }
            GFunction::AffinePower { coords } => coords.iter().map(|c| c.c0 + c.c1 * x.powf(1.0 / c.alpha)).collect(),
            GFunction::StableCone { direction, coef, alpha } => {
                let s = coef * x.powf(1.0 / alpha);
                direction.iter().map(|d| d * s).collect()
            }
            GFunction::Tabulated { grid, values } => {
                let n = grid.len();
                if x <= grid[0] {
                    return values[0].clone();
                }
                if x >= grid[n - 1] {
                    return values[n - 1].clone();
                }
                let j = grid.partition_point(|&g| g <= x) - 1;
                let t = (x - grid[j]) / (grid[j + 1] - grid[j]);
                values[j]
                    .iter()
                    .zip(&values[j + 1])
                    .map(|(a, b)| a + t * (b - a))
                    .collect()
            }
            GFunction::Saturating { coef, alpha, knee } => {
                vec![coef * (x / (1.0 + x / knee)).powf(1.0 / alpha)]
            }
            GFunction::PlaneComplement { g1, alpha, eta, c1, c2 } => {
                let a = g1.eval(x)[0];
                let rest = ((eta * x - c1 * a.powf(*alpha)) / c2).max(0.0);
                vec![a, rest.powf(1.0 / alpha)]
            }
            GFunction::ThreeD { g3, params: p } => {
                let g = g3.eval(x)[0];
                let g1 = ((x * p.eta1 - p.gamma3 * g.powf(p.alpha1)) / p.gamma1).max(0.0);
                let g2 = ((x * p.eta2 - p.gamma3_tilde * g.powf(p.alpha2)) / p.gamma2).max(0.0);
                vec![g1.powf(1.0 / p.alpha1), g2.powf(1.0 / p.alpha2), g]
            }
            GFunction::Custom(c) => (c.f)(x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stable_coord(alpha: f64) -> Coordinate {
        Coordinate {
            measure: LevyMeasure1D::stable(alpha, 1.0),
            q_ii: 0.0,
        }
    }

    #[test]
    fn rejects_indefinite_covariance() {
        let noise = Noise::Custom { rays: vec![] };
        let r = LevyModel::new(2, Some(vec![vec![1.0, 2.0], vec![2.0, 1.0]]), noise.clone());
        assert!(r.is_err());
        let r = LevyModel::new(2, Some(vec![vec![1.0, 0.5], vec![0.4, 1.0]]), noise.clone());
        assert!(r.is_err());
        assert!(LevyModel::new(2, Some(vec![vec![1.0, 1.0], vec![1.0, 1.0]]), noise).is_ok());
    }

    #[test]
    fn independent_q_is_diagonal() {
        let mut c = stable_coord(1.5);
        c.q_ii = 2.0;
        let m = LevyModel::independent(vec![c, stable_coord(1.3)]).unwrap();
        assert_eq!(m.q(), &[2.0, 0.0, 0.0, 0.0]);
        assert_eq!(m.rays().len(), 2);
    }

    #[test]
    fn serde_round_trip() {
        let m = LevyModel::independent(vec![stable_coord(1.5), stable_coord(1.3)]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        let back: LevyModel = serde_json::from_str(&s).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn spherical_needs_unit_directions() {
        let sm = SphericalMeasure {
            directions: vec![WeightedDirection {
                xi: vec![1.0, 1.0],
                weight: 1.0,
            }],
            radial: LevyMeasure1D::stable(1.5, 1.0),
        };
        assert!(LevyModel::new(2, None, Noise::Spherical { measure: sm }).is_err());
    }

    #[test]
    fn covariance_factor_reproduces_q() {
        let q = vec![vec![2.0, 0.5], vec![0.5, 1.0]];
        let m = LevyModel::new(2, Some(q.clone()), Noise::Custom { rays: vec![] }).unwrap();
        let l = m.covariance_factor();
        for i in 0..2 {
            for j in 0..2 {
                let s: f64 = (0..2).map(|k| l[i * 2 + k] * l[j * 2 + k]).sum();
                assert!((s - q[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn g_function_kinds() {
        let g = GFunction::affine_power(&[(1.0, 1.0, 1.5), (1.0, -1.0, 1.5)]);
        assert_eq!(g.eval(0.0), vec![1.0, 1.0]);
        let t = GFunction::Tabulated {
            grid: vec![0.0, 1.0, 2.0],
            values: vec![vec![0.0], vec![1.0], vec![4.0]],
        };
        assert_eq!(t.eval(1.5), vec![2.5]);
        assert_eq!(t.eval(10.0), vec![4.0]);
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
        let g3 = GFunction::ThreeD {
            g3: Box::new(GFunction::PowerSum { dim: 1, terms: vec![] }),
            params: p,
        };
        let v = g3.eval(2.0);
        assert!((v[0] - 2f64.powf(1.0 / 1.8)).abs() < 1e-15);
        assert!((v[1] - 2f64.powf(1.0 / 1.3)).abs() < 1e-15);
        assert_eq!(v[2], 0.0);
    }
}
