use poroiter_core::harness::random_system;
use poroiter_core::linalg::{
    max_generalized_eigenvalue, solve_spd, symmetric_eigenvalues, weighted_norm, DenseMatrix,
    Preconditioner, SolveMethod, SymmetricSqrt,
};
use poroiter_core::problems::{model_system, unit_square_system};
use poroiter_core::rng::Rng;
use poroiter_core::spectral::{
    build_iteration_matrices, polarization_gap, script_s_norm, verify_norm_bounds,
};
use poroiter_core::system::{
    coupling_bound, coupling_strength, iteration_bound_holds, min_inner_iterations,
    relaxation_gamma, solve_static, Forcing,
};
use proptest::prelude::*;

fn weighted_spectrum(ctau: &DenseMatrix, x: &DenseMatrix) -> Vec<f64> {
    let y = SymmetricSqrt::new(ctau).unwrap().congruent(x);
    symmetric_eigenvalues(&((&y + y.transpose()) * 0.5))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cg_and_direct_agree(seed in any::<u64>(), n in 1usize..=200) {
        let mut rng = Rng::new(seed);
        let m = rng.spd(n, 0.5);
        let b = rng.vector(n);
        let direct = solve_spd(&m, &b, SolveMethod::Direct, Preconditioner::None, 1e-12).unwrap();
        let cg = solve_spd(&m, &b, SolveMethod::Cg, Preconditioner::Jacobi, 1e-12).unwrap();
        let dev = (&cg - &direct).norm() / direct.norm();
        prop_assert!(dev <= 1e-8, "relative deviation {dev:e}");
    }

    #[test]
    fn weighted_norm_polarizes(seed in any::<u64>(), n in 1usize..=30) {
        let mut rng = Rng::new(seed);
        let m = rng.spd(n, 0.1);
        let (x, y) = (rng.vector(n), rng.vector(n));
        let nx = weighted_norm(&x, &m).unwrap();
        let ny = weighted_norm(&y, &m).unwrap();
        let nd = weighted_norm(&(&x - &y), &m).unwrap();
        let lhs = nx * nx + ny * ny - 2.0 * x.dot(&(&m * &y));
        let scale = nx * nx + ny * ny;
        prop_assert!((lhs - nd * nd).abs() <= 1e-12 * scale);
    }

    #[test]
    fn generalized_eigenvalue_is_congruence_invariant(seed in any::<u64>(), n in 1usize..=20) {
        let mut rng = Rng::new(seed);
        let g = rng.matrix(n, n) + DenseMatrix::identity(n, n) * 3.0;
        let h = rng.matrix(n, n);
        let num = h.transpose() * &h;
        let num = (&num + num.transpose()) * 0.5;
        let den = rng.spd(n, 0.5);
        let cong = |m: &DenseMatrix| {
            let c = g.transpose() * m * &g;
            (&c + c.transpose()) * 0.5
        };
        let a = max_generalized_eigenvalue(&num, &den, 1e-13).unwrap();
        let b = max_generalized_eigenvalue(&cong(&num), &cong(&den), 1e-13).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.max(1e-300), "{a} vs {b}");
    }

    #[test]
    fn single_sweep_suffices_below_one_third(omega in 0.0f64..(1.0 / 3.0)) {
        prop_assert_eq!(min_inner_iterations(omega), 1);
    }

    #[test]
    fn random_system_bounds(seed in any::<u64>(), tau in 0.0f64..0.5) {
        let mut rng = Rng::new(seed);
        let sys = random_system(&mut rng, 12).unwrap();
        let omega = coupling_strength(&sys, tau).unwrap();
        let gamma = relaxation_gamma(omega).unwrap();
        let k = min_inner_iterations(omega);
        let m = build_iteration_matrices(&sys, tau, gamma, k).unwrap();
        prop_assert!(verify_norm_bounds(&m, omega, gamma).unwrap().all_hold());
        let slack = 1e-10 * omega.max(1.0);
        let t = weighted_spectrum(&m.ctau, &m.t);
        prop_assert!(t[0] >= -omega - slack && t[t.len() - 1] <= slack);
        let s = weighted_spectrum(&m.ctau, &m.s);
        prop_assert!(s[0] >= -(1.0 - gamma) - 1e-10 && s[s.len() - 1] <= 1.0 - gamma + 1e-10);
        let r = script_s_norm(&m).unwrap();
        prop_assert!(r.spectral_radius < 1.0, "rho {}", r.spectral_radius);
    }

    #[test]
    fn coupling_never_exceeds_bound(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let sys = random_system(&mut rng, 12).unwrap();
        prop_assert!(coupling_strength(&sys, 0.0).unwrap() <= coupling_bound(&sys) + 1e-10);
    }

    #[test]
    fn static_solution_satisfies_both_equations(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let sys = random_system(&mut rng, 12).unwrap();
        let (n_u, n_p) = (sys.n_u(), sys.n_p());
        let sys = sys
            .with_rhs(Forcing::Constant(rng.vector(n_u)), Forcing::Constant(rng.vector(n_p)))
            .unwrap();
        let s = solve_static(&sys, 0.0).unwrap();
        let f = sys.f().eval(0.0);
        let g = sys.g().eval(0.0);
        let r1 = (sys.a() * &s.u - sys.d().transpose() * &s.p - &f).norm() / f.norm().max(1.0);
        let r2 = (sys.b() * &s.p - &g).norm() / g.norm().max(1.0);
        prop_assert!(r1 <= 1e-10 && r2 <= 1e-10, "{r1:e} {r2:e}");
    }
}

#[test]
fn polarization_identity_on_random_triples() {
    let mut rng = Rng::new(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.range(1, 12);
        let b = rng.spd(n, 0.1);
        let gap = polarization_gap(&b, &rng.vector(n), &rng.vector(n), &rng.vector(n));
        worst = worst.max(gap);
    }
    assert!(worst <= 1e-12, "worst relative gap {worst:e}");
}

#[test]
fn coupling_decreases_with_step() {
    for w in [0.3, 1.0, 2.8] {
        let sys = model_system(w).unwrap();
        let values: Vec<f64> = [0.0, 1e-3, 1e-1]
            .iter()
            .map(|&t| coupling_strength(&sys, t).unwrap())
            .collect();
        assert!(values.windows(2).all(|v| v[1] <= v[0]), "{values:?}");
    }
}

#[test]
fn builtin_problems_respect_coupling_bound() {
    for w in [0.1, 1.0, 2.8] {
        let sys = model_system(w).unwrap();
        assert!(coupling_strength(&sys, 0.0).unwrap() <= coupling_bound(&sys) + 1e-10);
    }
    for n in [4, 8] {
        let sys = unit_square_system(1.0, n).unwrap();
        let omega = coupling_strength(&sys, 0.0).unwrap();
        let bound = coupling_bound(&sys);
        assert!(omega <= bound + 1e-10);
        assert!(bound >= 0.1 * omega);
    }
}

#[test]
fn recursion_matrix_contracts_under_iteration_bound() {
    for w in [0.1, 1.0 / 3.0, 1.0, 2.8] {
        let sys = model_system(w).unwrap();
        let omega = coupling_strength(&sys, 0.0).unwrap();
        let k = min_inner_iterations(omega);
        assert!(iteration_bound_holds(omega, k));
        let m = build_iteration_matrices(&sys, 0.0, relaxation_gamma(omega).unwrap(), k).unwrap();
        let r = script_s_norm(&m).unwrap();
        assert!(r.spectral_radius < 1.0, "omega~ = {w}: rho = {}", r.spectral_radius);
        assert!((r.spectral_radius - r.eigen_map_radius).abs() <= 1e-8);
    }
}
