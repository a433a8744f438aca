//! Acceptance criteria, run in sequence with one PASS/FAIL line each.
//! Wall-clock budgets are part of each criterion.

use std::process::Command;
use std::time::Instant;

use affine_levy::fit::PowerTerm;
use affine_levy::generating::{
    build_example_3d, canonicalize, classify_plane_on, decompose_projection, default_b_grid, default_x_grid,
    dense_b_grid, generator_apply, synthesize_canonical_equation, validate_generating, CanonicalForm, DriftSpec,
    GeneratingPair, PlaneCase, ProjectionTriplet, TestFunction,
};
use affine_levy::laplace::laplace_exponent_multi;
use affine_levy::measure::{Density, LevyMeasure1D};
use affine_levy::model::{GFunction, LevyModel, Noise, SphericalMeasure, ThreeDParams, WeightedDirection};
use affine_levy::pricing::{hjm_residual, solve_b, AffineSolution};
use affine_levy::regvar::{
    power_law_detect, rv_index_from_density, rv_index_from_laplace, rv_index_from_tail, truncated_second_moment,
    weyl_approximate, ScalingRelationEvidence,
};
use affine_levy::simulate::{path_rng, sample_levy_increment, sample_spherical_increment, sample_stable_increment};
use affine_levy::special::h_func;
use affine_levy::Error;
use affine_levy_cli::runner::execute;
use affine_levy_cli::{bundled, Scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::gamma;

type Outcome = Result<String, String>;

/// `Gamma(2 - a) / (a (a - 1))` from an independent gamma implementation.
fn c_alpha(a: f64) -> f64 {
    gamma(2.0 - a) / (a * (a - 1.0))
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (lo.ln() + (hi / lo).ln() * i as f64 / (n - 1) as f64).exp())
        .collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn generating_scenarios() -> Vec<Scenario> {
    bundled::SCENARIOS
        .iter()
        .filter(|(n, _)| !n.starts_with("control_"))
        .map(|(n, t)| Scenario::parse(t, &[]).unwrap_or_else(|e| panic!("{n}: {e}")))
        .collect()
}

fn c01_stable_closed_form() -> Outcome {
    let mut worst: f64 = 0.0;
    for alpha in [1.2, 1.5, 1.8] {
        let scale = 0.7;
        let rho = LevyMeasure1D::density(Density::Power { scale, alpha });
        for b in [0.1, 1.0, 10.0] {
            let quad = rho.laplace(b).map_err(|e| e.to_string())?;
            let exact = scale * c_alpha(alpha) * b.powf(alpha);
            worst = worst.max(rel(quad, exact));
        }
    }
    ensure(worst <= 1e-6, || format!("max relative error {worst:e}"))?;
    Ok(format!("max relative error {worst:.2e}"))
}

fn random_measure(rng: &mut impl Rng, depth: u32) -> LevyMeasure1D {
    let kind = if depth == 0 {
        rng.random_range(0..5)
    } else {
        rng.random_range(0..4)
    };
    match kind {
        0 => LevyMeasure1D::stable(rng.random_range(1.05..1.95), rng.random_range(0.1..5.0)),
        1 => LevyMeasure1D::density(Density::TemperedStable {
            scale: rng.random_range(0.1..3.0),
            alpha: rng.random_range(0.2..1.9),
            rate: rng.random_range(0.2..5.0),
        }),
        2 => LevyMeasure1D::density(Density::Exponential {
            scale: rng.random_range(0.1..3.0),
            rate: rng.random_range(0.2..5.0),
        }),
        3 => LevyMeasure1D::atoms(
            (0..rng.random_range(1..4))
                .map(|_| (rng.random_range(0.05..5.0), rng.random_range(0.1..3.0)))
                .collect(),
        ),
        _ => LevyMeasure1D::Sum {
            parts: vec![random_measure(rng, 1), random_measure(rng, 1)],
        },
    }
}

fn c02_monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let grid = log_grid(1e-2, 1e2, 100);
    for k in 0..50 {
        let rho = random_measure(&mut rng, 0);
        let j: Vec<f64> = grid
            .iter()
            .map(|&b| rho.laplace(b))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        for i in 1..grid.len() {
            ensure(j[i] / grid[i] > j[i - 1] / grid[i - 1], || {
                format!("measure {k}: J/b not increasing at {}", grid[i])
            })?;
            ensure(j[i] / grid[i].powi(2) < j[i - 1] / grid[i - 1].powi(2), || {
                format!("measure {k}: J/b^2 not decreasing at {}", grid[i])
            })?;
        }
        let (b0, j0) = (grid[99], j[99]);
        for i in 0..99 {
            let b = grid[i];
            ensure(j0 / (b0 * b0) * b * b < j[i] && j[i] < j0 / b0 * b, || {
                format!("measure {k}: two-sided bound fails at b = {b}")
            })?;
        }
    }
    Ok("50 measures x 100 grid points".into())
}

fn c03_h_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10_000 {
        let z = 10f64.powf(rng.random_range(-4.0..2.0));
        let t = 10f64.powf(rng.random_range(-3.0..3.0));
        let (h, ht) = (h_func(z), h_func(t * z));
        // rounding slack only
        let slack = 1e-13 * h.max(ht);
        ensure(
            t.min(1.0).powi(2) * h <= ht + slack && ht <= t.max(1.0).powi(2) * h + slack,
            || format!("bound fails at z = {z}, t = {t}"),
        )?;
    }
    Ok("10^4 pairs".into())
}

fn c04_linearity() -> Outcome {
    let mut worst: f64 = 0.0;
    for sc in generating_scenarios() {
        let pair = sc.pair().map_err(|e| e.to_string())?;
        let (_, rep) =
            decompose_projection(&pair, &sc.grids.x_grid, &sc.grids.b_grid).map_err(|e| format!("{}: {e}", sc.name))?;
        ensure(rep.residual < 1e-8, || {
            format!("{}: residual {:e}", sc.name, rep.residual)
        })?;
        worst = worst.max(rep.residual);
    }
    let control = Scenario::parse(bundled::get("control_nonlinear").unwrap(), &[]).map_err(|e| e.to_string())?;
    let pair = control.pair().map_err(|e| e.to_string())?;
    let r = match decompose_projection(&pair, &control.grids.x_grid, &control.grids.b_grid) {
        Err(Error::Nonlinearity { residual }) => residual,
        Ok((_, rep)) => rep.residual,
        Err(e) => return Err(e.to_string()),
    };
    ensure(r > 1e-2, || format!("negative control residual {r:e}"))?;
    Ok(format!("worst generating residual {worst:.1e}, control {r:.2e}"))
}

fn c05_canonical_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut done = 0;
    let mut worst_a: f64 = 0.0;
    let mut worst_eta: f64 = 0.0;
    while done < 20 {
        let g = rng.random_range(1..=3);
        let mut alphas: Vec<f64> = (0..g)
            .map(|_| {
                if rng.random_bool(0.2) {
                    2.0
                } else {
                    rng.random_range(1.1..1.95)
                }
            })
            .collect();
        alphas.sort_by(|a, b| b.total_cmp(a));
        if alphas.windows(2).any(|w| w[0] - w[1] < 0.1) {
            continue;
        }
        let terms: Vec<PowerTerm> = alphas
            .iter()
            .map(|&alpha| PowerTerm {
                alpha,
                eta: rng.random_range(0.2..3.0),
            })
            .collect();
        let cf = CanonicalForm::new(terms.clone()).map_err(|e| e.to_string())?;
        let sde = synthesize_canonical_equation(&cf, DriftSpec { a: -0.5, b: 0.02 }).map_err(|e| e.to_string())?;
        let pair = sde.to_pair().map_err(|e| e.to_string())?;
        let back = canonicalize(&pair, &default_x_grid(), &dense_b_grid()).map_err(|e| format!("{terms:?}: {e}"))?;
        ensure(back.terms.len() == terms.len(), || {
            format!("{terms:?} came back as {:?}", back.terms)
        })?;
        for (t, u) in terms.iter().zip(&back.terms) {
            worst_a = worst_a.max((t.alpha - u.alpha).abs());
            worst_eta = worst_eta.max(rel(u.eta, t.eta));
            ensure((t.alpha - u.alpha).abs() <= 1e-3 && rel(u.eta, t.eta) <= 1e-3, || {
                format!("{terms:?} came back as {:?}", back.terms)
            })?;
        }
        done += 1;
    }
    Ok(format!(
        "20 forms; max |d alpha| {worst_a:.1e}, max rel d eta {worst_eta:.1e}"
    ))
}

fn c06_generator_equality() -> Outcome {
    let sc = Scenario::parse(bundled::get("example_2_2").unwrap(), &[]).map_err(|e| e.to_string())?;
    let pair = sc.pair().map_err(|e| e.to_string())?;
    let (t, _) = decompose_projection(&pair, &default_x_grid(), &default_b_grid()).map_err(|e| e.to_string())?;
    let cf = canonicalize(&pair, &default_x_grid(), &dense_b_grid()).map_err(|e| e.to_string())?;
    let sde = synthesize_canonical_equation(&cf, pair.drift).map_err(|e| e.to_string())?;
    ensure(cf.terms.len() == 1 && (sde.terms[0].d - 2.0).abs() < 1e-6, || {
        format!("canonical form {:?}, coefficient {:?}", cf.terms, sde.terms)
    })?;
    let canon = sde.to_pair().map_err(|e| e.to_string())?;
    let (tc, _) = decompose_projection(&canon, &default_x_grid(), &default_b_grid()).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for lam in [0.5, 1.0, 2.0, 5.0] {
        for x in [0.0, 0.1, 1.0, 10.0] {
            let f = TestFunction::exponential(lam);
            let g1 = generator_apply(&t, pair.drift, &f, x).map_err(|e| e.to_string())?;
            let g2 = generator_apply(&tc, canon.drift, &f, x).map_err(|e| e.to_string())?;
            worst = worst.max(rel(g2, g1));
        }
    }
    ensure(worst <= 1e-8, || format!("max relative difference {worst:e}"))?;
    Ok(format!("max relative difference {worst:.1e}"))
}

fn c07_ode_oracles() -> Outcome {
    let zero = |_: f64| Ok(0.0);
    let mut worst: f64 = 0.0;
    for a in [-0.5, -2.0] {
        let g = solve_b(a, 0.0, zero, 30.0, 1e-10).map_err(|e| e.to_string())?;
        ensure(*g.v.last().unwrap() == 30.0, || "grid does not reach 30".into())?;
        for (v, b) in g.v.iter().zip(&g.b) {
            let want = ((a * v).exp() - 1.0) / a;
            worst = worst.max((b - want).abs() / want.abs().max(1.0));
        }
    }
    let g = solve_b(0.0, 2.0, zero, 30.0, 1e-10).map_err(|e| e.to_string())?;
    let tanh_err =
        g.v.iter()
            .zip(&g.b)
            .map(|(v, b)| (b - v.tanh()).abs())
            .fold(0.0, f64::max);
    ensure(worst <= 1e-8 && tanh_err <= 1e-8, || {
        format!("exponential error {worst:e}, tanh error {tanh_err:e}")
    })?;
    let t = ProjectionTriplet {
        c: 1.0,
        nu0: LevyMeasure1D::zero(),
        mu: LevyMeasure1D::zero(),
    };
    let sol = AffineSolution::from_triplet(&t, DriftSpec { a: 0.0, b: 0.0 }, 30.0, 1e-10).map_err(|e| e.to_string())?;
    let res = sol.midpoint_residual().map_err(|e| e.to_string())?;
    ensure(res < 1e-9, || format!("midpoint residual {res:e}"))?;
    Ok(format!(
        "exponential {worst:.1e}, tanh {tanh_err:.1e}, midpoint residual {res:.1e}"
    ))
}

fn c08_hjm() -> Outcome {
    let v: Vec<f64> = (0..=20).map(|i| 0.5 * i as f64).collect();
    let x: Vec<f64> = (0..=10).map(|i| 0.1 * i as f64).collect();
    let mut worst: f64 = 0.0;
    let mut least_perturbed = f64::INFINITY;
    for sc in generating_scenarios() {
        let pair = sc.pair().map_err(|e| e.to_string())?;
        let (t, _) = decompose_projection(&pair, &sc.grids.x_grid, &sc.grids.b_grid).map_err(|e| e.to_string())?;
        let sol = AffineSolution::from_triplet(&t, pair.drift, 30.0, 1e-10).map_err(|e| format!("{}: {e}", sc.name))?;
        let r = hjm_residual(&pair, &sol, &v, &x).map_err(|e| e.to_string())?;
        let p = hjm_residual(&pair, &sol.scaled_b(1.01), &v, &x).map_err(|e| e.to_string())?;
        ensure(r < 1e-6, || format!("{}: residual {r:e}", sc.name))?;
        ensure(p > 1e-3, || format!("{}: perturbed residual only {p:e}", sc.name))?;
        worst = worst.max(r);
        least_perturbed = least_perturbed.min(p);
    }
    Ok(format!(
        "worst residual {worst:.1e}, smallest perturbed {least_perturbed:.1e}"
    ))
}

fn c09_martingale() -> Outcome {
    let mut out = Vec::new();
    for name in ["cir_classic", "example_2_2"] {
        let overrides = [
            "simulation.n_paths=100000",
            "simulation.dt=1/500",
            "simulation.horizon=1",
            "simulation.record_stride=125",
            r#"martingale={"maturity": 2, "checkpoints": [0.25, 0.5, 0.75]}"#,
            r#"analyses=["martingale"]"#,
        ]
        .map(String::from);
        let sc = Scenario::parse(bundled::get(name).unwrap(), &overrides).map_err(|e| e.to_string())?;
        let (outcome, _, _) = execute(&sc).map_err(|e| e.to_string())?;
        let m = &outcome.result.analyses["martingale"];
        let flat = m["report"]["flatness"].as_f64().ok_or("no flatness")?;
        let control = m["control_flatness"].as_f64().ok_or("no control")?;
        ensure(flat <= 4.0, || format!("{name}: flatness {flat:.2} SE"))?;
        ensure(control > 10.0, || {
            format!("{name}: biased control only {control:.2} SE")
        })?;
        out.push(format!("{name} {flat:.2} SE (control {control:.0} SE)"));
    }
    Ok(out.join(", "))
}

fn laplace_mc(samples: impl Iterator<Item = f64>) -> (f64, f64) {
    let e: Vec<f64> = samples.collect();
    let n = e.len() as f64;
    let m = e.iter().sum::<f64>() / n;
    let var = e.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn c10_samplers() -> Outcome {
    const N: usize = 100_000;
    let dt = 0.01;
    let mut worst: f64 = 0.0;
    let lams = [0.5, 1.0, 2.0];

    let mut rng = path_rng(10, 0);
    let xs: Vec<f64> = (0..N)
        .map(|_| sample_stable_increment(1.5, 1.0, dt, &mut rng))
        .collect();
    for lam in lams {
        let (m, se) = laplace_mc(xs.iter().map(|x| (-lam * x).exp()));
        let want = (dt * c_alpha(1.5) * lam.powf(1.5)).exp();
        worst = worst.max((m - want).abs() / se);
    }

    let rho = LevyMeasure1D::density(Density::TemperedStable {
        scale: 1.0,
        alpha: 1.3,
        rate: 2.0,
    });
    let mut rng = path_rng(10, 1);
    let sampler = affine_levy::simulate::IncrementSampler::new(&rho, dt, 1e-3).map_err(|e| e.to_string())?;
    let first = sample_levy_increment(&rho, dt, 1e-3, &mut rng).map_err(|e| e.to_string())?;
    let xs: Vec<f64> = std::iter::once(first)
        .chain((1..N).map(|_| sampler.sample(&mut rng)))
        .collect();
    for lam in lams {
        let (m, se) = laplace_mc(xs.iter().map(|x| (-lam * x).exp()));
        let want = (dt * rho.laplace(lam).map_err(|e| e.to_string())?).exp();
        worst = worst.max((m - want).abs() / se);
    }

    let sm = SphericalMeasure {
        directions: vec![
            WeightedDirection {
                xi: vec![1.0, 0.0],
                weight: 1.0,
            },
            WeightedDirection {
                xi: vec![0.6, 0.8],
                weight: 0.5,
            },
        ],
        radial: LevyMeasure1D::stable(1.6, 1.0),
    };
    let model = LevyModel::new(2, None, Noise::Spherical { measure: sm.clone() }).map_err(|e| e.to_string())?;
    let mut rng = path_rng(10, 2);
    let xs: Vec<Vec<f64>> = (0..N)
        .map(|_| sample_spherical_increment(&sm, dt, 1e-3, &mut rng))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    for lam in lams {
        let dir = [lam * 0.8, lam * 0.5];
        let (m, se) = laplace_mc(xs.iter().map(|x| (-(dir[0] * x[0] + dir[1] * x[1])).exp()));
        let want = (dt * laplace_exponent_multi(&model, &dir).map_err(|e| e.to_string())?).exp();
        worst = worst.max((m - want).abs() / se);
    }
    ensure(worst <= 4.0, || format!("worst deviation {worst:.2} SE"))?;
    Ok(format!("worst deviation {worst:.2} SE over 9 transforms"))
}

fn c11_regvar() -> Outcome {
    let cases = [
        ("stable 1.5", LevyMeasure1D::stable(1.5, 1.0)),
        (
            "power 1.3",
            LevyMeasure1D::density(Density::Power { scale: 2.0, alpha: 1.3 }),
        ),
        (
            "perturbed 1.7",
            LevyMeasure1D::density(Density::PerturbedPower { scale: 1.0, alpha: 1.7 }),
        ),
    ];
    let mut out = Vec::new();
    for (name, rho) in cases {
        let g = |v: f64| rho.density_at(v).unwrap();
        let l = rv_index_from_laplace(|b| rho.laplace(b).unwrap(), 2.0)
            .map_err(|e| e.to_string())?
            .alpha;
        let d = rv_index_from_density(g, &[1e4, 1e6, 1e8])
            .map_err(|e| e.to_string())?
            .alpha;
        let t = rv_index_from_tail(|v| truncated_second_moment(g, v).unwrap(), &[1e2, 1e4, 1e6])
            .map_err(|e| e.to_string())?
            .alpha;
        let spread = l.max(d).max(t) - l.min(d).min(t);
        ensure(spread <= 0.05, || {
            format!("{name}: laplace {l:.4}, density {d:.4}, tail {t:.4}")
        })?;
        out.push(format!("{name} spread {spread:.1e}"));
    }
    Ok(out.join(", "))
}

fn c12_power_law_weyl() -> Outcome {
    let mut worst: f64 = 0.0;
    for (c, alpha) in [(1.0, 1.5), (3.0, 1.4), (0.2, 1.9), (7.5, 1.05)] {
        let j = |b: f64| c * b.powf(alpha);
        let ev = ScalingRelationEvidence {
            beta: 2.0,
            eta: j(2.0) / j(1.0),
            gamma: std::f64::consts::PI,
            theta: j(std::f64::consts::PI) / j(1.0),
            residual: 0.0,
        };
        let pl = power_law_detect(j, &ev).map_err(|e| e.to_string())?;
        worst = worst.max((pl.c - c).abs() / c).max((pl.alpha - alpha).abs());
        ensure((pl.c - c).abs() <= 1e-6 * c && (pl.alpha - alpha).abs() <= 1e-6, || {
            format!("recovered ({}, {}) for ({c}, {alpha})", pl.c, pl.alpha)
        })?;
    }
    let dirty = |b: f64| b.powf(1.4) + 0.01 * b.powf(1.1);
    let ev = ScalingRelationEvidence {
        beta: 2.0,
        eta: 2f64.powf(1.4),
        gamma: 3.0,
        theta: 3f64.powf(1.4),
        residual: 0.0,
    };
    ensure(power_law_detect(dirty, &ev).is_err(), || {
        "two-power input accepted".into()
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for i in 0..1000 {
        let p = rng.random_range(0.1..3.0);
        let q = rng.random_range(0.1..3.0);
        let x = rng.random_range(-10.0..10.0);
        let delta = 10f64.powf(rng.random_range(-4.0..-1.0));
        let (m, n) =
            weyl_approximate(p, q, x, delta).map_err(|e| format!("instance {i} ({p}, {q}, {x}, {delta}): {e}"))?;
        let g = m as f64 * p + n as f64 * q;
        ensure((x - g).abs() <= delta, || {
            format!("instance {i}: |x - g| = {:e} > {delta:e}", (x - g).abs())
        })?;
    }
    Ok(format!(
        "power laws within {worst:.1e}; 1000 Weyl instances within delta"
    ))
}

fn c13_plane() -> Outcome {
    for (name, want) in [
        ("plane_case_Ia", PlaneCase::Ia),
        ("plane_case_Ib", PlaneCase::Ib),
        ("plane_case_II", PlaneCase::II),
    ] {
        let sc = Scenario::parse(bundled::get(name).unwrap(), &[]).map_err(|e| e.to_string())?;
        let pair = sc.pair().map_err(|e| e.to_string())?;
        let got = classify_plane_on(&pair, &sc.grids.x_grid, &sc.grids.canonical_b_grid);
        ensure(got == want, || format!("{name} classified as {}", got.tag()))?;
    }
    let hi = affine_levy::generating::plane_inequality_check(1.0, 1.0, 1.0, 1.0, 1.8, 1.2, 1e6);
    let lo = affine_levy::generating::plane_inequality_check(1.0, 1.0, 1.0, 1.0, 1.8, 1.2, 1e-6);
    ensure(hi && !lo, || {
        format!("inequality check gave {hi} at 1e6 and {lo} at 1e-6")
    })?;
    Ok("Ia, Ib, II recovered; inequality true at 1e6, false at 1e-6".into())
}

fn c14_three_d() -> Outcome {
    let p = ThreeDParams {
        gamma1: 0.7,
        gamma2: 1.3,
        gamma3: 0.5,
        gamma3_tilde: 2.0,
        eta1: 1.1,
        eta2: 0.6,
        alpha1: 1.8,
        alpha2: 1.3,
    };
    let g3 = GFunction::custom(1, move |x| vec![0.5 * p.g3_bound(x)]);
    let pair: GeneratingPair = build_example_3d(g3, p, DriftSpec { a: -0.5, b: 0.02 }).map_err(|e| e.to_string())?;
    let report = validate_generating(&pair);
    ensure(report.all_ok(), || format!("{:?}", report.failures()))?;
    let (_, rep) = decompose_projection(&pair, &default_x_grid(), &default_b_grid()).map_err(|e| e.to_string())?;
    ensure(rep.residual < 1e-8, || format!("residual {:e}", rep.residual))?;
    let mut worst: f64 = 0.0;
    for (b, s) in rep.b_grid.iter().zip(&rep.slopes) {
        worst = worst.max(rel(*s, p.eta1 * b.powf(p.alpha1) + p.eta2 * b.powf(p.alpha2)));
    }
    ensure(worst < 1e-8, || format!("slope error {worst:e}"))?;
    Ok(format!("residual {:.1e}, slope error {worst:.1e}", rep.residual))
}

fn c15_determinism() -> Outcome {
    let exe = env!("CARGO_BIN_EXE_affine-levy");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut checked = 0;
    for (name, _) in bundled::SCENARIOS {
        let mut reference: Option<Vec<u8>> = None;
        for (k, threads) in ["1", "1", "4", "8"].iter().enumerate() {
            let out = dir.path().join(format!("{name}_{k}"));
            let status = Command::new(exe)
                .args(["run", &format!("bundled:{name}"), "--out"])
                .arg(&out)
                .env("AFFINE_LEVY_THREADS", threads)
                .output()
                .map_err(|e| e.to_string())?;
            ensure(status.status.code().is_some_and(|c| c <= 1), || {
                format!("{name}: exit {:?}", status.status.code())
            })?;
            let bytes = std::fs::read(out.join("result.json")).map_err(|e| e.to_string())?;
            match &reference {
                None => reference = Some(bytes),
                Some(r) => ensure(r == &bytes, || {
                    format!("{name}: result.json differs with {threads} threads")
                })?,
            }
        }
        checked += 1;
    }
    Ok(format!("{checked} scenarios byte-identical across 1, 1, 4, 8 threads"))
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget_s: f64,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion {
            id: 1,
            name: "stable closed form vs quadrature",
            budget_s: 1.0,
            run: c01_stable_closed_form,
        },
        Criterion {
            id: 2,
            name: "Laplace exponent monotonicity",
            budget_s: 10.0,
            run: c02_monotonicity,
        },
        Criterion {
            id: 3,
            name: "H scaling bound",
            budget_s: 1.0,
            run: c03_h_bound,
        },
        Criterion {
            id: 4,
            name: "linearity in x",
            budget_s: 5.0,
            run: c04_linearity,
        },
        Criterion {
            id: 5,
            name: "canonicalization round trip",
            budget_s: 30.0,
            run: c05_canonical_round_trip,
        },
        Criterion {
            id: 6,
            name: "generator equality",
            budget_s: 5.0,
            run: c06_generator_equality,
        },
        Criterion {
            id: 7,
            name: "ODE oracles",
            budget_s: 1.0,
            run: c07_ode_oracles,
        },
        Criterion {
            id: 8,
            name: "HJM residual",
            budget_s: 10.0,
            run: c08_hjm,
        },
        Criterion {
            id: 9,
            name: "martingale flatness",
            budget_s: 300.0,
            run: c09_martingale,
        },
        Criterion {
            id: 10,
            name: "sampler fidelity",
            budget_s: 60.0,
            run: c10_samplers,
        },
        Criterion {
            id: 11,
            name: "regular-variation equivalence",
            budget_s: 10.0,
            run: c11_regvar,
        },
        Criterion {
            id: 12,
            name: "power-law detection and Weyl",
            budget_s: 10.0,
            run: c12_power_law_weyl,
        },
        Criterion {
            id: 13,
            name: "plane classification",
            budget_s: 5.0,
            run: c13_plane,
        },
        Criterion {
            id: 14,
            name: "three-coordinate family",
            budget_s: 5.0,
            run: c14_three_d,
        },
        Criterion {
            id: 15,
            name: "determinism across thread counts",
            budget_s: f64::INFINITY,
            run: c15_determinism,
        },
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    for c in &criteria {
        let tag = format!("{:02}", c.id);
        if !filter.is_empty() && !filter.iter().any(|f| *f == tag || c.name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = (c.run)();
        let secs = start.elapsed().as_secs_f64();
        let outcome = outcome.and_then(|d| {
            if secs < c.budget_s {
                Ok(d)
            } else {
                Err(format!("{d}; over the {} s budget", c.budget_s))
            }
        });
        let (verdict, detail) = match &outcome {
            Ok(d) => ("PASS", d.clone()),
            Err(d) => ("FAIL", d.clone()),
        };
        println!("criterion {tag} {verdict} {} [{secs:.2} s]: {detail}", c.name);
        if outcome.is_err() {
            failed.push(c.id);
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
