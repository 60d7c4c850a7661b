use cusp_spectra::eigen::{inverse_iteration, minimize_rayleigh, monotone_operator_check, SolverConfig};
use cusp_spectra::mesh::{build_cusp_mesh, build_reference_mesh};
use cusp_spectra::{DiscreteProblem, GradedMesh, ProblemParams};
use proptest::prelude::*;

#[test]
fn monotonicity_on_random_pairs() {
    for p in [1.5, 2.0, 3.0] {
        let mesh = build_cusp_mesh(2.0, 6, 2.0).unwrap();
        let dp = DiscreteProblem::new(mesh, ProblemParams::new(p, 2.0, 0.5)).unwrap();
        for k in 0..500u64 {
            let u = dp.random_start(2 * k);
            let v = dp.random_start(2 * k + 1);
            let m = monotone_operator_check(&dp, &u, &v);
            let scale = dp.x_norm(&u).max(dp.x_norm(&v)).powf(p);
            assert!(m >= -1e-12 * scale, "p {p}, pair {k}: {m}");
        }
    }
}

#[test]
fn discrete_infimum() {
    let mesh = build_cusp_mesh(1.5, 8, 1.5).unwrap();
    let dp = DiscreteProblem::new(mesh, ProblemParams::new(2.0, 2.0, -0.5)).unwrap();
    let cfg = SolverConfig::default();
    let res = inverse_iteration(&dp, &dp.default_start(), &cfg).unwrap();
    assert!(res.lambda > 0.0);
    for k in 0..100 {
        let v = dp.project_constraint(&dp.random_start(1000 + k)).unwrap();
        assert!(res.lambda <= dp.rayleigh_quotient(&v).unwrap() + cfg.tol * res.lambda);
    }
    for w in res.mu_trace.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-10));
    }
}

#[test]
fn positivity_across_configurations() {
    for (g1, p, q, alpha) in [(1.0, 2.0, 2.0, 0.0), (2.0, 2.5, 2.0, 1.0), (3.0, 1.8, 1.5, 0.0), (1.5, 3.0, 3.0, -0.5)] {
        let mesh = build_cusp_mesh(g1, 6, g1).unwrap();
        let dp = DiscreteProblem::new(mesh, ProblemParams::new(p, q, alpha)).unwrap();
        let res = minimize_rayleigh(&dp, &dp.default_start(), &SolverConfig::default()).unwrap();
        assert!(res.lambda > 0.0 && res.lambda.is_finite());
        assert!(res.residual <= 1e-6);
        assert!(res.constraint_residual <= 1e-10);
    }
}

#[test]
fn single_precision_solve() {
    let mesh = build_reference_mesh::<f32>(8, 1.0).unwrap();
    let dp = cusp_spectra::DiscreteProblem32::new(mesh, cusp_spectra::ProblemParams32::new(2.0, 2.0, 0.0)).unwrap();
    let cfg = SolverConfig {
        tol: 1e-5,
        weak_tol: 1e-3,
        inner: cusp_spectra::eigen::InnerConfig {
            kkt_tol: 1e-5,
            cg_tol: 1e-6,
            ..Default::default()
        },
        ..SolverConfig::default()
    };
    let r = inverse_iteration(&dp, &dp.default_start(), &cfg).unwrap();
    let d = cusp_spectra::eigen::direct_eigensolve_p2(&dp).unwrap();
    assert!((r.lambda / d.result.lambda - 1.0).abs() < 1e-3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn mesh_text_round_trip(g1 in 1.0f64..4.0, n in 2usize..14, extra in 0.0f64..2.0) {
        let m = build_cusp_mesh(g1, n, 1.0 + extra).unwrap();
        let back = GradedMesh::from_text(&m.to_text()).unwrap();
        prop_assert_eq!(&back, &m);
        let area = m.total_area();
        prop_assert!((area * (g1 + 1.0) - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn rayleigh_scale_invariance(seed in 0u64..1000, t in prop_oneof![-5.0f64..-0.1, 0.1f64..5.0]) {
        let mesh = build_reference_mesh(5, 1.0).unwrap();
        let dp = DiscreteProblem::new(mesh, ProblemParams::new(2.5, 3.0, 0.0)).unwrap();
        let u = dp.random_start(seed);
        let tu: Vec<f64> = u.iter().map(|x| t * x).collect();
        let (a, b) = (dp.rayleigh_quotient(&u).unwrap(), dp.rayleigh_quotient(&tu).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * a);
    }
}
