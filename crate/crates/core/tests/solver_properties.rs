use maxsurf::forms::{alpha_of, max_interior_circulation};
use maxsurf::mesh::build_rectangle;
use maxsurf::solver::{jacobian, solve};
use maxsurf::{p1_gradient, Metric, ScalarField, SolverConfig};
use proptest::prelude::*;

fn serial(metric: Metric) -> SolverConfig {
    SolverConfig { threads: 0, ..SolverConfig::new(metric) }
}

fn metric() -> impl Strategy<Value = Metric> {
    prop::sample::select(vec![Metric::Lorentz, Metric::Euclid])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn affine_data_is_reproduced(r in 0.0f64..0.8, th in 0.0f64..6.3, c in -2.0f64..2.0, metric in metric()) {
        let m = build_rectangle(1.0, 1.0, 0.125).unwrap();
        let (a, b) = (r * th.cos(), r * th.sin());
        let exact = ScalarField::from_fn(&m, |x, y| a * x + b * y + c).unwrap();
        let sol = solve(&m, &exact, &serial(metric)).unwrap();
        prop_assert!(sol.report.iterations <= 2);
        prop_assert!(sol.field.difference(&exact, 0.0).unwrap().max_abs() <= 1e-9);
    }

    #[test]
    fn lorentz_solutions_are_spacelike_and_closed(a in -0.5f64..0.5, k in 0.0f64..0.15, p in 0.0f64..6.3) {
        let m = build_rectangle(1.0, 1.0, 0.125).unwrap();
        let bc = ScalarField::from_fn(&m, |x, y| a * x + k * (4.0 * y + p).sin()).unwrap();
        let cfg = serial(Metric::Lorentz);
        let sol = solve(&m, &bc, &cfg).unwrap();
        let g = p1_gradient(&m, &sol.field).unwrap();
        prop_assert!(g.max_norm(None) < 1.0);
        let (_, circ) = max_interior_circulation(&m, &alpha_of(&m, &sol.field).unwrap()).unwrap().unwrap();
        prop_assert!(circ.abs() <= 10.0 * cfg.residual_tol);
        let again = solve(&m, &bc, &cfg).unwrap();
        prop_assert_eq!(sol.field.values(), again.field.values());
    }
}

#[test]
fn jacobians_coincide_at_zero_gradient() {
    let m = build_rectangle(1.0, 1.0, 0.25).unwrap();
    let z = ScalarField::zeros(&m);
    let jl = jacobian(&m, &z, &SolverConfig::lorentz()).unwrap();
    let je = jacobian(&m, &z, &SolverConfig::euclid()).unwrap();
    assert_eq!(jl.to_dense(), je.to_dense());
}
