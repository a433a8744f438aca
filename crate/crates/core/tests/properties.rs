use affine_levy::generating::DriftSpec;
use affine_levy::generating::GeneratingPair;
use affine_levy::generating::ProjectionTriplet;
use affine_levy::laplace::laplace_exponent_multi;
use affine_levy::measure::{Density, LevyMeasure1D};
use affine_levy::model::{Coordinate, GFunction, LevyModel};
use affine_levy::pricing::{bond_price, AffineSolution};
use affine_levy::simulate::{simulate_short_rate, PathConfig, SdeSpec};
use affine_levy::special::{gamma, h_func, stable_constant};
use proptest::prelude::*;

fn measure_strategy() -> impl Strategy<Value = LevyMeasure1D> {
    let stable = (1.05f64..1.95, 0.1f64..5.0).prop_map(|(a, s)| LevyMeasure1D::stable(a, s));
    let tempered = (0.2f64..1.9, 0.1f64..3.0, 0.2f64..5.0)
        .prop_map(|(alpha, scale, rate)| LevyMeasure1D::density(Density::TemperedStable { scale, alpha, rate }));
    let expo = (0.1f64..3.0, 0.2f64..5.0)
        .prop_map(|(scale, rate)| LevyMeasure1D::density(Density::Exponential { scale, rate }));
    let atoms = prop::collection::vec((0.05f64..5.0, 0.1f64..3.0), 1..4).prop_map(LevyMeasure1D::atoms);
    let leaf = prop_oneof![stable, tempered, expo, atoms];
    prop_oneof![
        3 => leaf.clone(),
        1 => (leaf.clone(), leaf).prop_map(|(a, b)| LevyMeasure1D::Sum { parts: vec![a, b] }),
    ]
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (lo.ln() + (hi / lo).ln() * i as f64 / (n - 1) as f64).exp())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn h_scaling_bound(z in 0.0f64..60.0, t in 1e-3f64..30.0) {
        let h = h_func(z);
        let ht = h_func(t * z);
        let slack = 1e-13 * ht.max(h) + 1e-300;
        prop_assert!(t.min(1.0).powi(2) * h <= ht + slack);
        prop_assert!(ht <= t.max(1.0).powi(2) * h + slack);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn laplace_exponent_growth(rho in measure_strategy()) {
        let grid = log_grid(1e-2, 1e2, 100);
        let j: Vec<f64> = grid.iter().map(|&b| rho.laplace(b).unwrap()).collect();
        for i in 1..grid.len() {
            prop_assert!(j[i] / grid[i] > j[i - 1] / grid[i - 1], "J/b not increasing at {}", grid[i]);
            prop_assert!(j[i] / grid[i].powi(2) < j[i - 1] / grid[i - 1].powi(2), "J/b^2 not decreasing at {}", grid[i]);
        }
        let b0 = *grid.last().unwrap();
        let j0 = *j.last().unwrap();
        for (&b, &jb) in grid.iter().zip(&j).take(grid.len() - 1) {
            prop_assert!(j0 / (b0 * b0) * b * b < jb);
            prop_assert!(jb < j0 / b0 * b);
        }
    }

    #[test]
    fn laplace_exponent_is_convex(rho in measure_strategy(), b in 0.05f64..20.0) {
        let h = 0.01 * b;
        let (l, m, r) = (rho.laplace(b - h).unwrap(), rho.laplace(b).unwrap(), rho.laplace(b + h).unwrap());
        prop_assert!(l + r - 2.0 * m >= -1e-8 * m);
    }

    #[test]
    fn independent_noise_adds_coordinates(m1 in measure_strategy(), m2 in measure_strategy(), l1 in 0.0f64..5.0, l2 in 0.0f64..5.0) {
        let model = LevyModel::independent(vec![
            Coordinate { measure: m1.clone(), q_ii: 0.0 },
            Coordinate { measure: m2.clone(), q_ii: 0.0 },
        ]).unwrap();
        let joint = laplace_exponent_multi(&model, &[l1, l2]).unwrap();
        let sum = m1.laplace(l1).unwrap() + m2.laplace(l2).unwrap();
        prop_assert!((joint - sum).abs() <= 1e-14 * sum.abs().max(1e-300));
    }

    #[test]
    fn riccati_solution_is_nonnegative(a in -2.0f64..0.5, c in 0.0f64..1.0, alpha in 1.1f64..1.9, scale in 0.0f64..2.0) {
        let t = ProjectionTriplet {
            c,
            nu0: LevyMeasure1D::zero(),
            mu: if scale > 0.0 { LevyMeasure1D::stable(alpha, scale) } else { LevyMeasure1D::zero() },
        };
        let sol = AffineSolution::from_triplet(&t, DriftSpec { a, b: 0.1 }, 10.0, 1e-10).unwrap();
        prop_assert!(sol.b.iter().all(|&b| b >= 0.0));
        prop_assert_eq!(sol.b[0], 0.0);
        prop_assert_eq!(sol.a[0], 0.0);
        for &v in &[0.5, 2.0, 9.5] {
            let p = bond_price(&sol, 0.0, v, 0.03).unwrap();
            prop_assert!(p > 0.0 && p <= 1.0);
        }
        prop_assert!(sol.midpoint_residual().unwrap() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn simulated_rates_stay_nonnegative(alpha in 1.1f64..1.9, d in 0.1f64..3.0, a in -2.0f64..1.0, b in 0.0f64..0.2, seed in any::<u64>()) {
        let model = LevyModel::independent(vec![Coordinate { measure: LevyMeasure1D::stable(alpha, 1.0), q_ii: 0.0 }]).unwrap();
        let pair = GeneratingPair::new(model, GFunction::diagonal_powers(&[(d, alpha)]), DriftSpec { a, b }).unwrap();
        let paths = simulate_short_rate(SdeSpec::Pair(&pair), 0.05, &PathConfig::new(1.0, 0.01, 20, seed)).unwrap();
        prop_assert!(paths.values.iter().all(|&r| r >= 0.0));
    }
}

#[test]
fn stable_constant_identities() {
    let c12 = stable_constant(1.2).unwrap();
    assert!((c12 * 1.2 * 0.2 - gamma(0.8)).abs() < 1e-13 * gamma(0.8));
    let c = stable_constant(1.999).unwrap();
    let lhs = c * 1.999 * 0.999;
    assert!((lhs - gamma(0.001)).abs() < 1e-12 * gamma(0.001));
    assert!(stable_constant(1.0).is_err() && stable_constant(2.0).is_err());
}

#[test]
fn simulation_ignores_thread_count() {
    let model = LevyModel::independent(vec![
        Coordinate {
            measure: LevyMeasure1D::stable(1.5, 1.0),
            q_ii: 0.0,
        },
        Coordinate {
            measure: LevyMeasure1D::zero(),
            q_ii: 1.0,
        },
    ])
    .unwrap();
    let pair = GeneratingPair::new(
        model,
        GFunction::diagonal_powers(&[(0.4, 1.5), (0.1, 2.0)]),
        DriftSpec { a: -1.0, b: 0.05 },
    )
    .unwrap();
    let cfg = PathConfig::new(1.0, 0.01, 64, 99);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate_short_rate(SdeSpec::Pair(&pair), 0.03, &cfg).unwrap())
    };
    let one = run(1);
    for t in [2, 4, 8] {
        assert_eq!(one, run(t));
    }
}
