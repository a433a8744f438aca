//! Lévy increment samplers and the full-truncation Euler scheme for
//! `dR = F(R) dt + <G(R-), dZ>`.

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generating::{CanonicalSde, GeneratingPair};
use crate::measure::LevyMeasure1D;
use crate::model::SphericalMeasure;
use crate::quad::Tolerance;
use crate::special::stable_constant;

pub const DEFAULT_EPS: f64 = 1e-3;
const TABLE_POINTS: usize = 2048;
const TAIL_CUTOFF: f64 = 1e-12;

fn default_eps() -> f64 {
    DEFAULT_EPS
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default = "default_eps")]
    pub truncation_eps: f64,
    /// Keep every `record_stride`-th step; the horizon is always kept.
    #[serde(default = "default_stride")]
    pub record_stride: usize,
}

impl PathConfig {
    pub fn new(horizon: f64, dt: f64, n_paths: usize, seed: u64) -> Self {
        PathConfig {
            horizon,
            dt,
            n_paths,
            seed,
            truncation_eps: DEFAULT_EPS,
            record_stride: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if !(self.dt > 0.0 && self.dt < self.horizon) {
            return Err(Error::InvalidInput(format!(
                "need 0 < dt < horizon, got dt = {}",
                self.dt
            )));
        }
        if self.n_paths == 0 {
            return Err(Error::InvalidInput("n_paths must be at least 1".into()));
        }
        if !(self.truncation_eps > 0.0 && self.truncation_eps < 1.0) {
            return Err(Error::InvalidInput("truncation_eps must lie in (0, 1)".into()));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidInput("record_stride must be at least 1".into()));
        }
        Ok(())
    }

    /// Step count; the step is shrunk to `horizon / n_steps`.
    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt - 1e-9).ceil().max(1.0) as usize
    }
}

/// The RNG of path `index` under `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Width `sigma` of the totally skewed stable law matching
/// `dt * scale * C_alpha * b^alpha`.
fn stable_sigma(alpha: f64, scale: f64, dt: f64) -> Result<f64> {
    let c = stable_constant(alpha)?;
    Ok((dt * scale * c * (FRAC_PI_2 * alpha).cos().abs()).powf(1.0 / alpha))
}

/// Chambers-Mallows-Stuck draw of `S_alpha(sigma, 1, 0)`, which has mean zero
/// for `alpha > 1`.
fn cms(alpha: f64, sigma: f64, rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.sample(Open01);
    let v = std::f64::consts::PI * (u - 0.5);
    let w: f64 = rng.sample(Exp1);
    let t = (FRAC_PI_2 * alpha).tan();
    let b = t.atan() / alpha;
    let s = (1.0 + t * t).powf(0.5 / alpha);
    let x = s * (alpha * (v + b)).sin() / v.cos().powf(1.0 / alpha)
        * ((v - alpha * (v + b)).cos() / w).powf((1.0 - alpha) / alpha);
    sigma * x
}

/// Increment over `dt` of the compensated spectrally positive stable process
/// with measure `scale * v^{-1-alpha} dv`.
pub fn sample_stable_increment(alpha: f64, scale: f64, dt: f64, rng: &mut impl Rng) -> f64 {
    match stable_sigma(alpha, scale, dt) {
        Ok(sigma) => cms(alpha, sigma, rng),
        Err(_) => f64::NAN,
    }
}

/// Increment over `dt` of the compensated process with jump measure `rho`.
/// Prepares a sampler on every call; use [`IncrementSampler`] in loops.
pub fn sample_levy_increment(rho: &LevyMeasure1D, dt: f64, eps: f64, rng: &mut impl Rng) -> Result<f64> {
    Ok(IncrementSampler::new(rho, dt, eps)?.sample(rng))
}

/// Increment over `dt` of the compensated noise with spherical measure.
pub fn sample_spherical_increment(sm: &SphericalMeasure, dt: f64, eps: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    Ok(SphericalSampler::new(sm, dt, eps)?.sample(rng))
}

/// Inverse CDF of the normalized jump law on `(eps, v_hi]`.
#[derive(Debug, Clone)]
struct JumpTable {
    grid: Vec<f64>,
    cum: Vec<f64>,
}

impl JumpTable {
    fn draw(&self, rng: &mut impl Rng) -> f64 {
        let total = *self.cum.last().unwrap();
        let u = rng.random::<f64>() * total;
        let i = self.cum.partition_point(|&c| c <= u).clamp(1, self.cum.len() - 1) - 1;
        let span = self.cum[i + 1] - self.cum[i];
        let frac = if span > 0.0 { (u - self.cum[i]) / span } else { 0.5 };
        self.grid[i] + frac * (self.grid[i + 1] - self.grid[i])
    }
}

/// Prepared sampler of one compensated increment over a fixed `dt`.
#[derive(Debug, Clone)]
pub enum IncrementSampler {
    Zero,
    Stable {
        alpha: f64,
        sigma: f64,
    },
    /// Exact compound Poisson on finitely many atoms.
    Atoms {
        atoms: Vec<(f64, Poisson<f64>)>,
        compensation: f64,
    },
    /// Jumps above `eps` from a table, a Gaussian below.
    Truncated {
        jumps: Option<(Poisson<f64>, JumpTableHandle)>,
        small_sd: f64,
        compensation: f64,
    },
    Sum(Vec<IncrementSampler>),
    Scaled {
        factor: f64,
        inner: Box<IncrementSampler>,
    },
}

/// Opaque inverse-CDF table.
#[derive(Debug, Clone)]
pub struct JumpTableHandle(JumpTable);

impl IncrementSampler {
    pub fn new(rho: &LevyMeasure1D, dt: f64, eps: f64) -> Result<Self> {
        if !(dt > 0.0) || !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidInput(format!(
                "need dt > 0 and eps in (0,1), got {dt}, {eps}"
            )));
        }
        if rho.is_zero() {
            return Ok(IncrementSampler::Zero);
        }
        match rho {
            LevyMeasure1D::Stable { alpha, scale } => Ok(IncrementSampler::Stable {
                alpha: *alpha,
                sigma: stable_sigma(*alpha, *scale, dt)?,
            }),
            LevyMeasure1D::Atoms { atoms } => {
                let mut out = Vec::new();
                let mut compensation = 0.0;
                for &(v, w) in atoms {
                    if w > 0.0 && v > 0.0 {
                        let p = Poisson::new(w * dt).map_err(|e| Error::InvalidInput(e.to_string()))?;
                        out.push((v, p));
                        compensation += w * v * dt;
                    }
                }
                Ok(IncrementSampler::Atoms {
                    atoms: out,
                    compensation,
                })
            }
            LevyMeasure1D::Sum { parts } => Ok(IncrementSampler::Sum(
                parts
                    .iter()
                    .map(|p| IncrementSampler::new(p, dt, eps))
                    .collect::<Result<_>>()?,
            )),
            LevyMeasure1D::Scaled { factor, weight, base } => {
                if !(*factor > 0.0 && *weight > 0.0) {
                    return Ok(IncrementSampler::Zero);
                }
                Ok(IncrementSampler::Scaled {
                    factor: *factor,
                    inner: Box::new(IncrementSampler::new(base, dt * weight, eps / factor)?),
                })
            }
            LevyMeasure1D::Density { .. } => Self::truncated(rho, dt, eps),
        }
    }

    fn truncated(rho: &LevyMeasure1D, dt: f64, eps: f64) -> Result<Self> {
        let small = rho.small_second_moment(eps)?;
        let lambda = rho.tail_mass(eps)?;
        let mut jumps = None;
        let mut first = 0.0;
        if lambda > 0.0 {
            let sup = rho.support_sup();
            let v_hi = if sup.is_finite() {
                sup
            } else {
                let mut v = (10.0 * eps).max(1.0);
                while v < 1e12 && rho.tail_mass(v)? > TAIL_CUTOFF * lambda {
                    v *= 10.0;
                }
                v
            };
            if v_hi > eps {
                let tol = Tolerance::new(1e-300, 1e-10);
                let ratio = (v_hi / eps).ln() / (TABLE_POINTS - 1) as f64;
                let grid: Vec<f64> = (0..TABLE_POINTS)
                    .map(|i| {
                        if i + 1 == TABLE_POINTS {
                            v_hi
                        } else {
                            eps * (ratio * i as f64).exp()
                        }
                    })
                    .collect();
                let mut cum = vec![0.0; TABLE_POINTS];
                for i in 1..TABLE_POINTS {
                    cum[i] = cum[i - 1] + rho.integrate(|_| 1.0, grid[i - 1], grid[i], tol)?;
                    first += rho.integrate(|v| v, grid[i - 1], grid[i], tol)?;
                }
                let mass = cum[TABLE_POINTS - 1];
                if mass > 0.0 {
                    let p = Poisson::new(mass * dt).map_err(|e| Error::InvalidInput(e.to_string()))?;
                    jumps = Some((p, JumpTableHandle(JumpTable { grid, cum })));
                }
            }
        }
        Ok(IncrementSampler::Truncated {
            jumps,
            small_sd: (small * dt).sqrt(),
            compensation: first * dt,
        })
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match self {
            IncrementSampler::Zero => 0.0,
            IncrementSampler::Stable { alpha, sigma } => cms(*alpha, *sigma, rng),
            IncrementSampler::Atoms { atoms, compensation } => {
                let mut x = 0.0;
                for (v, p) in atoms {
                    x += v * p.sample(rng);
                }
                x - compensation
            }
            IncrementSampler::Truncated {
                jumps,
                small_sd,
                compensation,
            } => {
                let mut x = 0.0;
                if let Some((p, table)) = jumps {
                    let n = p.sample(rng) as u64;
                    for _ in 0..n {
                        x += table.0.draw(rng);
                    }
                }
                if *small_sd > 0.0 {
                    let z: f64 = rng.sample(StandardNormal);
                    x += small_sd * z;
                }
                x - compensation
            }
            IncrementSampler::Sum(parts) => parts.iter().map(|p| p.sample(rng)).sum(),
            IncrementSampler::Scaled { factor, inner } => factor * inner.sample(rng),
        }
    }
}

/// Per-direction radial samplers of a spherical measure.
#[derive(Debug, Clone)]
pub struct SphericalSampler {
    directions: Vec<(Vec<f64>, IncrementSampler)>,
}

impl SphericalSampler {
    pub fn new(sm: &SphericalMeasure, dt: f64, eps: f64) -> Result<Self> {
        Ok(SphericalSampler {
            directions: sm
                .directions
                .iter()
                .map(|d| Ok((d.xi.clone(), IncrementSampler::new(&sm.radial, dt * d.weight, eps)?)))
                .collect::<Result<_>>()?,
        })
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        let dim = self.directions.first().map_or(0, |d| d.0.len());
        let mut out = vec![0.0; dim];
        for (xi, s) in &self.directions {
            let r = s.sample(rng);
            for (o, x) in out.iter_mut().zip(xi) {
                *o += r * x;
            }
        }
        out
    }
}

/// Sampler of the increment of the full noise `Z` over `dt`.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    dim: usize,
    factor: Vec<f64>,
    gaussian: bool,
    sqrt_dt: f64,
    rays: Vec<(Vec<f64>, IncrementSampler)>,
}

impl NoiseSampler {
    pub fn new(model: &crate::model::LevyModel, dt: f64, eps: f64) -> Result<Self> {
        let rays = model
            .rays()
            .iter()
            .map(|r| {
                Ok((
                    r.direction.to_vec(),
                    IncrementSampler::new(r.measure, dt * r.weight, eps)?,
                ))
            })
            .collect::<Result<_>>()?;
        Ok(NoiseSampler {
            dim: model.dim(),
            factor: model.covariance_factor(),
            gaussian: model.q().iter().any(|&q| q != 0.0),
            sqrt_dt: dt.sqrt(),
            rays,
        })
    }

    pub fn sample_into(&self, rng: &mut impl Rng, out: &mut [f64], scratch: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let d = self.dim;
        if self.gaussian {
            for s in scratch.iter_mut() {
                *s = rng.sample::<f64, _>(StandardNormal) * self.sqrt_dt;
            }
            for (o, row) in out.iter_mut().zip(self.factor.chunks(d)) {
                *o = row.iter().zip(scratch.iter()).map(|(f, z)| f * z).sum();
            }
        }
        for (dir, s) in &self.rays {
            let r = s.sample(rng);
            for (o, x) in out.iter_mut().zip(dir) {
                *o += r * x;
            }
        }
    }
}

/// Simulated short-rate trajectories at the recorded times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortRatePaths {
    pub times: Vec<f64>,
    /// Row-major `n_paths x times.len()`.
    pub values: Vec<f64>,
    /// Trapezoid `int_0^t R ds`, same layout as `values`.
    pub integrals: Vec<f64>,
    pub n_paths: usize,
    pub x0: f64,
    pub seed_used: u64,
    pub scheme_tag: String,
    /// Steps that ended with a negative auxiliary state.
    pub clamp_count: u64,
}

#[derive(Debug, Clone, Copy)]
pub enum SdeSpec<'a> {
    Pair(&'a GeneratingPair),
    Canonical(&'a CanonicalSde),
}

/// Full-truncation Euler: coefficients at `max(R, 0)`, then `R <- max(R, 0)`.
pub fn simulate_short_rate(sde: SdeSpec<'_>, x0: f64, cfg: &PathConfig) -> Result<ShortRatePaths> {
    cfg.validate()?;
    if !(x0 >= 0.0 && x0.is_finite()) {
        return Err(Error::InvalidInput(format!("x0 must be nonnegative, got {x0}")));
    }
    let owned;
    let pair = match sde {
        SdeSpec::Pair(p) => p,
        SdeSpec::Canonical(c) => {
            owned = c.to_pair()?;
            &owned
        }
    };
    let n_steps = cfg.n_steps();
    let dt = cfg.horizon / n_steps as f64;
    let noise = NoiseSampler::new(&pair.model, dt, cfg.truncation_eps)?;
    let recorded: Vec<usize> = (0..=n_steps)
        .filter(|&k| k % cfg.record_stride == 0 || k == n_steps)
        .collect();
    let times: Vec<f64> = recorded
        .iter()
        .map(|&k| if k == n_steps { cfg.horizon } else { k as f64 * dt })
        .collect();
    let n_rec = recorded.len();
    let dim = pair.model.dim();

    let rows: Vec<(Vec<f64>, Vec<f64>, u64)> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(cfg.seed, p as u64);
            let mut dz = vec![0.0; dim];
            let mut scratch = vec![0.0; dim];
            let mut vals = Vec::with_capacity(n_rec);
            let mut ints = Vec::with_capacity(n_rec);
            // auxiliary state; the short rate is its positive part
            let mut aux = x0;
            let mut integral = 0.0;
            let mut clamps = 0u64;
            let mut next = 0;
            for k in 0..=n_steps {
                let r = aux.max(0.0);
                if recorded[next] == k {
                    vals.push(r);
                    ints.push(integral);
                    next = (next + 1).min(n_rec - 1);
                }
                if k == n_steps {
                    break;
                }
                noise.sample_into(&mut rng, &mut dz, &mut scratch);
                let g = pair.gfun.eval(r);
                let diffusion: f64 = g.iter().zip(&dz).map(|(a, b)| a * b).sum();
                aux += pair.drift.eval(r) * dt + diffusion;
                if !(aux >= 0.0) {
                    clamps += 1;
                }
                integral += 0.5 * (r + aux.max(0.0)) * dt;
            }
            (vals, ints, clamps)
        })
        .collect();

    let mut values = Vec::with_capacity(cfg.n_paths * n_rec);
    let mut integrals = Vec::with_capacity(cfg.n_paths * n_rec);
    let mut clamp_count = 0;
    for (v, i, c) in rows {
        values.extend(v);
        integrals.extend(i);
        clamp_count += c;
    }
    let rate = clamp_count as f64 / (cfg.n_paths * n_steps) as f64;
    Ok(ShortRatePaths {
        times,
        values,
        integrals,
        n_paths: cfg.n_paths,
        x0,
        seed_used: cfg.seed,
        scheme_tag: format!("full_truncation_euler;clamps={clamp_count};clamp_rate={rate:e}"),
        clamp_count,
    })
}

const MAGIC: &[u8; 8] = b"ALPATHS1";

impl ShortRatePaths {
    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn path(&self, i: usize) -> &[f64] {
        let n = self.n_times();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        let n = self.n_times();
        (0..self.n_paths).map(|i| self.values[i * n + k]).collect()
    }

    pub fn integral_column(&self, k: usize) -> Vec<f64> {
        let n = self.n_times();
        (0..self.n_paths).map(|i| self.integrals[i * n + k]).collect()
    }

    /// Index of the recorded time equal to `t`.
    pub fn time_index(&self, t: f64) -> Result<usize> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
            .ok_or_else(|| Error::InvalidInput(format!("time {t} is not on the recorded grid")))
    }

    /// Linearly interpolated order statistics per recorded time.
    pub fn fan(&self, probs: &[f64]) -> Vec<Vec<f64>> {
        (0..self.n_times())
            .map(|k| {
                let mut col = self.column(k);
                col.sort_by(f64::total_cmp);
                probs.iter().map(|&p| quantile_sorted(&col, p)).collect()
            })
            .collect()
    }

    /// `path_id,t,R` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("path_id,t,R\n");
        for i in 0..self.n_paths {
            for (k, t) in self.times.iter().enumerate() {
                let _ = writeln!(out, "{i},{t},{}", self.values[i * self.n_times() + k]);
            }
        }
        out
    }

    /// Columnar little-endian dump: magic, counts, seed, x0, clamp count,
    /// tag, times, then `values` and `integrals` one time column at a time.
    pub fn to_binary(&self) -> Vec<u8> {
        let n = self.n_times();
        let mut out = Vec::with_capacity(64 + 8 * (n + 2 * n * self.n_paths));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.n_paths as u64).to_le_bytes());
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.extend_from_slice(&self.seed_used.to_le_bytes());
        out.extend_from_slice(&self.x0.to_le_bytes());
        out.extend_from_slice(&self.clamp_count.to_le_bytes());
        out.extend_from_slice(&(self.scheme_tag.len() as u64).to_le_bytes());
        out.extend_from_slice(self.scheme_tag.as_bytes());
        for t in &self.times {
            out.extend_from_slice(&t.to_le_bytes());
        }
        for data in [&self.values, &self.integrals] {
            for k in 0..n {
                for i in 0..self.n_paths {
                    out.extend_from_slice(&data[i * n + k].to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_binary(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8)? != MAGIC {
            return Err(Error::Decode("bad magic".into()));
        }
        let n_paths = cur.len_u64()?;
        let n_times = cur.len_u64()?;
        let seed_used = cur.u64()?;
        let x0 = cur.f64()?;
        let clamp_count = cur.u64()?;
        let tag_len = cur.len_u64()?;
        let scheme_tag = std::str::from_utf8(cur.take(tag_len)?)
            .map_err(|_| Error::Decode("scheme tag is not UTF-8".into()))?
            .to_string();
        let cells = n_paths
            .checked_mul(n_times)
            .ok_or_else(|| Error::Decode("size overflow".into()))?;
        let needed = cells
            .checked_mul(16)
            .and_then(|c| c.checked_add(n_times.checked_mul(8)?))
            .ok_or_else(|| Error::Decode("size overflow".into()))?;
        if cur.remaining() != needed {
            return Err(Error::Decode(format!(
                "payload has {} bytes, header implies {needed}",
                cur.remaining()
            )));
        }
        let times = (0..n_times).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
        let mut values = vec![0.0; cells];
        let mut integrals = vec![0.0; cells];
        for data in [&mut values, &mut integrals] {
            for k in 0..n_times {
                for i in 0..n_paths {
                    data[i * n_times + k] = cur.f64()?;
                }
            }
        }
        Ok(ShortRatePaths {
            times,
            values,
            integrals,
            n_paths,
            x0,
            seed_used,
            scheme_tag,
            clamp_count,
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if n > self.remaining() {
            return Err(Error::Decode("truncated input".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len_u64(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Decode("length does not fit in memory".into()))
    }
}

/// Type-7 quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
