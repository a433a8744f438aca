//! Executes the analyses of a scenario and writes the run directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use affine_levy::generating::{
    canonicalize_with_report, classify_plane_on, decompose_projection, synthesize_canonical_equation,
    validate_generating_on, GeneratingPair, PlaneCase, ProjectionTriplet,
};
use affine_levy::laplace::projection_laplace;
use affine_levy::measure::LevyMeasure1D;
use affine_levy::pricing::{hjm_residual, martingale_check, pairwise_sum, term_structure, AffineSolution};
use affine_levy::regvar::{
    power_law_detect, rv_index_from_density, rv_index_from_laplace, rv_index_from_tail, truncated_second_moment,
    weyl_approximate,
};
use affine_levy::simulate::{simulate_short_rate, SdeSpec, ShortRatePaths};
use serde::Serialize;
use serde_json::{json, Value};

use crate::scenario::{Analysis, Scenario};

pub const RESULT_FILE: &str = "result.json";
pub const MANIFEST_FILE: &str = "run_manifest.json";
pub const PATHS_FILE: &str = "paths.bin";
/// Path CSVs are written only up to this many paths.
pub const PATHS_CSV_LIMIT: usize = 1000;
const MARTINGALE_SE_LIMIT: f64 = 4.0;
const HJM_LIMIT: f64 = 1e-6;
const REGVAR_AGREEMENT: f64 = 0.05;
const LAPLACE_XS: [f64; 5] = [0.0, 0.25, 0.5, 1.0, 2.0];

#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub scenario: String,
    pub ok: bool,
    pub failures: Vec<String>,
    pub analyses: BTreeMap<String, Value>,
}

pub struct RunOutcome {
    pub result: RunResult,
    pub timings: Vec<(Analysis, f64)>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.result.ok {
            0
        } else {
            1
        }
    }
}

struct Ctx<'a> {
    sc: &'a Scenario,
    pair: GeneratingPair,
    triplet: Option<Result<ProjectionTriplet, String>>,
    solution: Option<AffineSolution>,
    paths: Option<ShortRatePaths>,
    files: BTreeMap<String, String>,
}

impl Ctx<'_> {
    fn triplet(&mut self) -> Result<ProjectionTriplet, String> {
        if self.triplet.is_none() {
            let g = &self.sc.grids;
            let t = decompose_projection(&self.pair, &g.x_grid, &g.b_grid)
                .map(|(t, _)| t)
                .map_err(|e| e.to_string());
            self.triplet = Some(t);
        }
        self.triplet.clone().expect("set above")
    }
}

/// One analysis: its JSON section and failure messages.
struct Section {
    body: Value,
    failures: Vec<String>,
}

impl Section {
    fn new(body: Value, failures: Vec<String>) -> Self {
        let mut body = body;
        if let Value::Object(m) = &mut body {
            m.insert("ok".into(), Value::Bool(failures.is_empty()));
        }
        Section { body, failures }
    }

    fn failed(msg: String) -> Self {
        Section::new(json!({ "error": msg }), vec![msg])
    }
}

/// Leaf stable indices of a measure built from stable parts.
fn stable_indices(m: &LevyMeasure1D) -> Option<Vec<f64>> {
    if m.is_zero() {
        return Some(Vec::new());
    }
    match m {
        LevyMeasure1D::Stable { alpha, .. } => Some(vec![*alpha]),
        LevyMeasure1D::Sum { parts } => {
            let mut out = Vec::new();
            for p in parts {
                out.extend(stable_indices(p)?);
            }
            Some(out)
        }
        LevyMeasure1D::Scaled { base, .. } => stable_indices(base),
        _ => None,
    }
}

/// Which of the one-dimensional model classes the triplet belongs to.
pub fn case_tag(t: &ProjectionTriplet) -> &'static str {
    let c = t.c > 0.0;
    let nu0 = !t.nu0.is_zero();
    let mu = !t.mu.is_zero();
    match (c, nu0, mu) {
        (true, false, false) => "classical CIR",
        (false, false, true) => match stable_indices(&t.mu) {
            Some(a) if a.windows(2).all(|w| w[0] == w[1]) => "generalized CIR (alpha-stable)",
            _ => "generalized CIR",
        },
        (false, true, false) => "generalized Vasicek",
        (false, false, false) => "deterministic",
        _ => "mixed",
    }
}

fn csv_rows(header: &str, rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for r in rows {
        let line: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", line.join(","));
    }
    out
}

fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = pairwise_sum(x) / n;
    if x.len() < 2 {
        return (m, 0.0);
    }
    let d: Vec<f64> = x.iter().map(|v| (v - m) * (v - m)).collect();
    (m, (pairwise_sum(&d) / (n - 1.0) / n).sqrt())
}

fn validate(ctx: &mut Ctx) -> Section {
    let g = &ctx.sc.grids;
    let report = validate_generating_on(&ctx.pair, &g.x_grid, &g.b_grid);
    let decomposition = decompose_projection(&ctx.pair, &g.x_grid, &g.b_grid);
    let (residual, triplet) = match &decomposition {
        Ok((t, r)) => (json!(r.residual), Some(t.clone())),
        Err(affine_levy::Error::Nonlinearity { residual }) => (json!(residual), None),
        Err(e) => (json!(e.to_string()), None),
    };
    let mut curve = Vec::new();
    for &x in &LAPLACE_XS {
        let gx = ctx.pair.gfun.eval(x);
        for &b in &g.canonical_b_grid {
            if let Ok(j) = projection_laplace(&ctx.pair.model, &gx, b) {
                curve.push(vec![b, x, j]);
            }
        }
    }
    ctx.files.insert("laplace.csv".into(), csv_rows("b,x,J", curve));
    let failures = report
        .failures()
        .into_iter()
        .map(|f| format!("validate: {f}"))
        .collect();
    let body = json!({
        "conditions": report,
        "decomposition_residual": residual,
        "case": triplet.as_ref().map(case_tag),
        "triplet": triplet.as_ref().map(|t| json!({
            "c": t.c,
            "nu0_is_zero": t.nu0.is_zero(),
            "mu_is_zero": t.mu.is_zero(),
            "mu_at_1": t.mu.laplace(1.0).ok(),
        })),
    });
    if let Some(t) = triplet {
        ctx.triplet = Some(Ok(t));
    }
    Section::new(body, failures)
}

fn canonicalize(ctx: &mut Ctx) -> Section {
    let g = &ctx.sc.grids;
    match canonicalize_with_report(&ctx.pair, &g.x_grid, &g.canonical_b_grid) {
        Ok(rep) => {
            ctx.files.insert(
                "canonical_fit.csv".into(),
                csv_rows(
                    "b,observed,fitted",
                    (0..rep.b_grid.len()).map(|i| vec![rep.b_grid[i], rep.observed[i], rep.fitted[i]]),
                ),
            );
            let sde = synthesize_canonical_equation(&rep.form, ctx.sc.drift);
            match sde {
                Ok(sde) => Section::new(
                    json!({
                        "terms": rep.form.terms,
                        "fit_residual": rep.fit_residual,
                        "equation": sde,
                    }),
                    vec![],
                ),
                Err(e) => Section::failed(format!("canonicalize: {e}")),
            }
        }
        Err(e) => Section::failed(format!("canonicalize: {e}")),
    }
}

fn classify2d(ctx: &mut Ctx) -> Section {
    let g = &ctx.sc.grids;
    let case = classify_plane_on(&ctx.pair, &g.x_grid, &g.canonical_b_grid);
    let failures = if case == PlaneCase::NotGenerating {
        vec!["classify2d: the pair matches none of the planar generating cases".to_string()]
    } else {
        vec![]
    };
    Section::new(json!({ "case": case.tag() }), failures)
}

fn price(ctx: &mut Ctx) -> Section {
    let t = match ctx.triplet() {
        Ok(t) => t,
        Err(e) => return Section::failed(format!("price: no triplet ({e})")),
    };
    let g = &ctx.sc.grids;
    let sol = match AffineSolution::from_triplet(&t, ctx.sc.drift, g.v_max, g.tol) {
        Ok(s) => s,
        Err(e) => return Section::failed(format!("price: {e}")),
    };
    let mut failures = Vec::new();
    let residual = match sol.midpoint_residual() {
        Ok(r) => r,
        Err(e) => return Section::failed(format!("price: {e}")),
    };
    if !(residual < 10.0 * g.tol) {
        failures.push(format!("price: ODE midpoint residual {residual:e} exceeds 10 tol"));
    }
    let pricing = ctx.sc.pricing.as_ref().expect("schema requires pricing");
    let curve = match term_structure(&sol, pricing.r0, &pricing.maturities) {
        Ok(c) => c,
        Err(e) => return Section::failed(format!("price: {e}")),
    };
    ctx.files.insert("solution.csv".into(), sol.to_csv());
    ctx.files.insert(
        "term_structure.csv".into(),
        csv_rows("T,P,yield", curve.iter().map(|p| vec![p.maturity, p.price, p.yield_])),
    );
    let body = json!({
        "c_ode": sol.params.c_ode,
        "grid_points": sol.grid.len(),
        "midpoint_residual": residual,
        "B_at_v_max": sol.b.last(),
        "A_at_v_max": sol.a.last(),
        "term_structure": curve,
    });
    ctx.solution = Some(sol);
    Section::new(body, failures)
}

fn hjm(ctx: &mut Ctx) -> Section {
    let Some(sol) = &ctx.solution else {
        return Section::failed("hjm: no bond-price solution".into());
    };
    let g = &ctx.sc.grids;
    let r = hjm_residual(&ctx.pair, sol, &g.hjm_v, &g.hjm_x);
    let p = hjm_residual(&ctx.pair, &sol.scaled_b(1.01), &g.hjm_v, &g.hjm_x);
    match (r, p) {
        (Ok(r), Ok(p)) => {
            let failures = if r < HJM_LIMIT {
                vec![]
            } else {
                vec![format!("hjm: residual {r:e} exceeds {HJM_LIMIT:e}")]
            };
            Section::new(json!({ "residual": r, "perturbed_residual": p }), failures)
        }
        (Err(e), _) | (_, Err(e)) => Section::failed(format!("hjm: {e}")),
    }
}

fn simulate(ctx: &mut Ctx) -> Section {
    let sim = ctx.sc.simulation.as_ref().expect("schema requires simulation");
    let paths = match simulate_short_rate(SdeSpec::Pair(&ctx.pair), sim.x0, &sim.paths) {
        Ok(p) => p,
        Err(e) => return Section::failed(format!("simulate: {e}")),
    };
    let last = paths.n_times() - 1;
    let (mean, se) = mean_se(&paths.column(last));
    let body = json!({
        "n_paths": paths.n_paths,
        "n_steps": sim.paths.n_steps(),
        "recorded_times": paths.n_times(),
        "seed": paths.seed_used,
        "scheme": paths.scheme_tag,
        "clamp_count": paths.clamp_count,
        "terminal_mean": mean,
        "terminal_se": se,
    });
    if paths.n_paths <= PATHS_CSV_LIMIT {
        ctx.files.insert("paths.csv".into(), paths.to_csv());
    }
    ctx.paths = Some(paths);
    Section::new(body, vec![])
}

fn martingale(ctx: &mut Ctx) -> Section {
    let (Some(sol), Some(paths)) = (&ctx.solution, &ctx.paths) else {
        return Section::failed("martingale: needs both a bond-price solution and paths".into());
    };
    let m = ctx.sc.martingale.as_ref().expect("schema requires martingale");
    let report = martingale_check(paths, sol, m.maturity, &m.checkpoints);
    let control = martingale_check(paths, &sol.shifted_a(m.control_bias), m.maturity, &m.checkpoints);
    match (report, control) {
        (Ok(r), Ok(c)) => {
            ctx.files.insert(
                "martingale.csv".into(),
                csv_rows(
                    "t,mean,se",
                    (0..r.checkpoints.len()).map(|i| vec![r.checkpoints[i], r.means[i], r.std_errors[i]]),
                ),
            );
            let failures = if r.flatness <= MARTINGALE_SE_LIMIT {
                vec![]
            } else {
                vec![format!(
                    "martingale: discounted bond price drifts by {:.2} pooled standard errors",
                    r.flatness
                )]
            };
            Section::new(json!({ "report": r, "control_flatness": c.flatness }), failures)
        }
        (Err(e), _) | (_, Err(e)) => Section::failed(format!("martingale: {e}")),
    }
}

fn regvar(ctx: &mut Ctx) -> Section {
    let section = ctx.sc.regvar.clone().unwrap_or(crate::scenario::Regvar {
        measure: None,
        scaling: None,
    });
    let measure = match section.measure {
        Some(m) => m,
        None => match ctx.triplet() {
            Ok(t) => t.mu,
            Err(e) => return Section::failed(format!("regvar: no projection measure ({e})")),
        },
    };
    let mut estimates = BTreeMap::new();
    let mut failures = Vec::new();
    match rv_index_from_laplace(|b| measure.laplace(b).unwrap_or(f64::NAN), 2.0) {
        Ok(e) => {
            estimates.insert("laplace", e.alpha);
        }
        Err(e) => failures.push(format!("regvar: laplace route: {e}")),
    }
    if measure.density_at(1.0).is_some() {
        let dens = |v: f64| measure.density_at(v).unwrap_or(0.0);
        match rv_index_from_density(dens, &[1e4, 1e6, 1e8]) {
            Ok(e) => {
                estimates.insert("density", e.alpha);
            }
            Err(e) => failures.push(format!("regvar: density route: {e}")),
        }
        let tail = |v: f64| truncated_second_moment(dens, v).unwrap_or(f64::NAN);
        match rv_index_from_tail(tail, &[1e2, 1e4, 1e6]) {
            Ok(e) => {
                estimates.insert("tail", e.alpha);
            }
            Err(e) => failures.push(format!("regvar: tail route: {e}")),
        }
    }
    let vals: Vec<f64> = estimates.values().cloned().collect();
    let spread =
        vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - vals.iter().cloned().fold(f64::INFINITY, f64::min);
    if vals.len() > 1 && !(spread <= REGVAR_AGREEMENT) {
        failures.push(format!("regvar: index estimates disagree by {spread:.3}"));
    }
    let power_law = section.scaling.map(
        |ev| match power_law_detect(|b| measure.laplace(b).unwrap_or(f64::NAN), &ev) {
            Ok(p) => json!(p),
            Err(e) => {
                failures.push(format!("regvar: power-law detection: {e}"));
                json!({ "error": e.to_string() })
            }
        },
    );
    Section::new(
        json!({ "estimates": estimates, "spread": if vals.len() > 1 { json!(spread) } else { Value::Null }, "power_law": power_law }),
        failures,
    )
}

fn weyl(ctx: &mut Ctx) -> Section {
    let w = ctx.sc.weyl.as_ref().expect("schema requires weyl");
    match weyl_approximate(w.p, w.q, w.x, w.delta) {
        Ok((m, n)) => {
            let err = (w.x - (m as f64 * w.p + n as f64 * w.q)).abs();
            let failures = if err <= w.delta {
                vec![]
            } else {
                vec![format!("weyl: |x - (m p + n q)| = {err:e} exceeds delta")]
            };
            Section::new(json!({ "m": m, "n": n, "error": err }), failures)
        }
        Err(e) => Section::failed(format!("weyl: {e}")),
    }
}

/// Runs every planned analysis; writes nothing.
pub fn execute(sc: &Scenario) -> affine_levy::Result<(RunOutcome, BTreeMap<String, String>, Option<ShortRatePaths>)> {
    let mut ctx = Ctx {
        sc,
        pair: sc.pair()?,
        triplet: None,
        solution: None,
        paths: None,
        files: BTreeMap::new(),
    };
    let mut analyses = BTreeMap::new();
    let mut failures = Vec::new();
    let mut timings = Vec::new();
    for a in sc.plan() {
        let start = Instant::now();
        let s = match a {
            Analysis::Validate => validate(&mut ctx),
            Analysis::Canonicalize => canonicalize(&mut ctx),
            Analysis::Classify2d => classify2d(&mut ctx),
            Analysis::Price => price(&mut ctx),
            Analysis::Hjm => hjm(&mut ctx),
            Analysis::Simulate => simulate(&mut ctx),
            Analysis::Martingale => martingale(&mut ctx),
            Analysis::Regvar => regvar(&mut ctx),
            Analysis::Weyl => weyl(&mut ctx),
        };
        timings.push((a, start.elapsed().as_secs_f64()));
        failures.extend(s.failures);
        analyses.insert(a.name().to_string(), s.body);
    }
    let result = RunResult {
        scenario: sc.name.clone(),
        ok: failures.is_empty(),
        failures,
        analyses,
    };
    Ok((RunOutcome { result, timings }, ctx.files, ctx.paths))
}

/// Runs the scenario and writes `result.json`, the manifest and the CSVs.
pub fn run(sc: &Scenario, out_dir: &Path) -> std::io::Result<RunOutcome> {
    let start = Instant::now();
    let (outcome, files, paths) = execute(sc).map_err(|e| std::io::Error::other(e.to_string()))?;
    fs::create_dir_all(out_dir)?;
    let mut result = serde_json::to_string_pretty(&outcome.result).map_err(std::io::Error::other)?;
    result.push('\n');
    fs::write(out_dir.join(RESULT_FILE), result)?;
    for (name, body) in &files {
        fs::write(out_dir.join(name), body)?;
    }
    if let Some(p) = &paths {
        fs::write(out_dir.join(PATHS_FILE), p.to_binary())?;
    }
    let manifest = json!({
        "scenario": sc.name,
        "normalized_scenario": sc.normalized(),
        "seed": sc.simulation.as_ref().map(|s| s.paths.seed),
        "threads": rayon::current_num_threads(),
        "versions": {
            "affine-levy": affine_levy::VERSION,
            "affine-levy-cli": env!("CARGO_PKG_VERSION"),
        },
        "wall_clock_seconds": outcome.timings.iter().map(|(a, t)| (a.name(), *t)).collect::<BTreeMap<_, _>>(),
        "total_seconds": start.elapsed().as_secs_f64(),
        "files": files.keys().cloned().chain(paths.as_ref().map(|_| PATHS_FILE.to_string())).collect::<Vec<_>>(),
    });
    let mut m = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
    m.push('\n');
    fs::write(out_dir.join(MANIFEST_FILE), m)?;
    Ok(outcome)
}
