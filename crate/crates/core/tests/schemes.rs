use poroiter_core::harness::random_system;
use poroiter_core::integrators::{
    bdf2_implicit_step, bdf2_semi_explicit_step, increment_scheme_step, integrate,
    naive_iterative_step, novel_scheme_step, novel_scheme_sweeps, StepWorkspace,
};
use poroiter_core::linalg::{weighted_norm, DenseMatrix, Vector};
use poroiter_core::problems::model_system;
use poroiter_core::rng::Rng;
use poroiter_core::system::{
    assemble_ctau, coupling_strength, relaxation_gamma, solve_static, Forcing, PoroSystem, Scheme,
    SchemeConfig, State, TimeGrid,
};

fn rel(a: &State, b: &State) -> f64 {
    let num = ((&a.u - &b.u).norm_squared() + (&a.p - &b.p).norm_squared()).sqrt();
    let den = (b.u.norm_squared() + b.p.norm_squared()).sqrt().max(1e-300);
    num / den
}

/// Random system with sine loads and two random states one step apart.
fn random_case(rng: &mut Rng) -> (PoroSystem, f64, State, State) {
    let sys = random_system(rng, 12).unwrap();
    let (n_u, n_p) = (sys.n_u(), sys.n_p());
    let sys = sys
        .with_rhs(Forcing::Sine(rng.vector(n_u)), Forcing::Sine(rng.vector(n_p)))
        .unwrap();
    let tau = rng.uniform(0.01, 0.3);
    let s0 = State::new(0.3, rng.vector(n_u), rng.vector(n_p));
    let s1 = State::new(0.3 + tau, rng.vector(n_u), rng.vector(n_p));
    (sys, tau, s0, s1)
}

#[test]
fn novel_with_one_sweep_is_semi_explicit() {
    let mut rng = Rng::new(11);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (sys, tau, s0, s1) = random_case(&mut rng);
        let ws = StepWorkspace::new(&sys, tau).unwrap();
        let (a, _) = novel_scheme_step(&ws, &s0, &s1, 1, 0.7).unwrap();
        let (b, _) = bdf2_semi_explicit_step(&ws, &s0, &s1).unwrap();
        worst = worst.max(rel(&a, &b));
    }
    assert!(worst < 1e-12, "max deviation {worst:e}");
}

#[test]
fn increment_form_matches_direct_form() {
    let mut rng = Rng::new(12);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (sys, tau, s0, s1) = random_case(&mut rng);
        let ws = StepWorkspace::new(&sys, tau).unwrap();
        for k in 1..=5 {
            for gamma in [0.3, 0.7, 1.0] {
                let (a, _) = novel_scheme_step(&ws, &s0, &s1, k, gamma).unwrap();
                let (b, _) = increment_scheme_step(&ws, &s0, &s1, k, gamma).unwrap();
                worst = worst.max(rel(&b, &a));
            }
        }
    }
    assert!(worst < 1e-12, "max deviation {worst:e}");
}

#[test]
fn equivalences_hold_on_model_problem() {
    let sys = model_system(0.7).unwrap();
    let tau = 1.0 / 32.0;
    let ws = StepWorkspace::new(&sys, tau).unwrap();
    let s0 = solve_static(&sys, 0.0).unwrap();
    let s1 = solve_static(&sys, tau).unwrap();
    let (a, _) = novel_scheme_step(&ws, &s0, &s1, 1, 0.5).unwrap();
    let (b, _) = bdf2_semi_explicit_step(&ws, &s0, &s1).unwrap();
    assert!(rel(&a, &b) < 1e-12);
    for k in 1..=5 {
        let (a, _) = novel_scheme_step(&ws, &s0, &s1, k, 0.6).unwrap();
        let (b, _) = increment_scheme_step(&ws, &s0, &s1, k, 0.6).unwrap();
        assert!(rel(&b, &a) < 1e-12);
    }
}

/// Consecutive implicit BDF-2 states of the model problem, as step inputs.
fn implicit_pairs(sys: &PoroSystem, tau: f64, steps: usize) -> Vec<(State, State)> {
    let initial = solve_static(sys, 0.0).unwrap();
    let grid = TimeGrid::new(tau, steps).unwrap();
    let traj = integrate(sys, &grid, &SchemeConfig::new(Scheme::ImplicitBdf2), &initial).unwrap();
    traj.states.windows(2).map(|w| (w[0].clone(), w[1].clone())).collect()
}

#[test]
fn relaxed_iteration_reaches_implicit_step() {
    let sys = model_system(1.0).unwrap();
    let omega = coupling_strength(&sys, 0.0).unwrap();
    let gamma = relaxation_gamma(omega).unwrap();
    let tau = 1.0 / 16.0;
    let ws = StepWorkspace::new(&sys, tau).unwrap();
    for (s0, s1) in implicit_pairs(&sys, tau, 8) {
        let (a, _) = novel_scheme_step(&ws, &s0, &s1, 50, gamma).unwrap();
        let (b, _) = bdf2_implicit_step(&ws, &s0, &s1).unwrap();
        assert!(rel(&a, &b) < 1e-10, "{:e}", rel(&a, &b));
    }
}

#[test]
fn naive_iteration_reaches_implicit_step_below_unit_coupling() {
    let sys = model_system(0.9).unwrap();
    let omega = coupling_strength(&sys, 0.0).unwrap();
    assert!(omega < 1.0);
    let tau = 1.0 / 16.0;
    let ws = StepWorkspace::new(&sys, tau).unwrap();
    for (s0, s1) in implicit_pairs(&sys, tau, 8) {
        let (a, _) = naive_iterative_step(&ws, &s0, &s1, 60).unwrap();
        let (b, _) = bdf2_implicit_step(&ws, &s0, &s1).unwrap();
        assert!(rel(&a, &b) < 1e-10, "{:e}", rel(&a, &b));
    }
}

/// Ratios of successive `Cτ`-norm distances to `target`, skipping the tail
/// where the distance sits at rounding level.
fn observed_ratios(iterates: &[Vector], target: &Vector, ctau: &DenseMatrix) -> Vec<f64> {
    let d: Vec<f64> = iterates
        .iter()
        .map(|p| weighted_norm(&(p - target), ctau).unwrap())
        .collect();
    let floor = 1e-11 * weighted_norm(target, ctau).unwrap().max(1.0);
    d.windows(2)
        .filter(|w| w[0] > floor && w[1] > floor)
        .map(|w| w[1] / w[0])
        .collect()
}

#[test]
fn relaxed_sweeps_contract_at_predicted_rate() {
    let sys = model_system(1.0).unwrap();
    let omega = coupling_strength(&sys, 0.0).unwrap();
    let gamma = relaxation_gamma(omega).unwrap();
    let tau = 1.0 / 16.0;
    let ws = StepWorkspace::new(&sys, tau).unwrap();
    let ctau = assemble_ctau(&sys, tau);
    for (s0, s1) in implicit_pairs(&sys, tau, 4) {
        let trace = novel_scheme_sweeps(&ws, &s0, &s1, 50, gamma).unwrap();
        let (exact, _) = bdf2_implicit_step(&ws, &s0, &s1).unwrap();
        let ratios = observed_ratios(&trace.p_relaxed, &exact.p, &ctau);
        assert!(!ratios.is_empty());
        for r in ratios {
            assert!(r <= omega / (2.0 + omega) + 1e-6, "ratio {r}");
        }
    }
}

#[test]
fn naive_sweeps_contract_at_coupling_rate() {
    let sys = model_system(0.9).unwrap();
    let omega = coupling_strength(&sys, 0.0).unwrap();
    let tau = 1.0 / 16.0;
    let ws = StepWorkspace::new(&sys, tau).unwrap();
    let ctau = assemble_ctau(&sys, tau);
    let (s0, s1) = implicit_pairs(&sys, tau, 2).remove(1);
    let (exact, _) = bdf2_implicit_step(&ws, &s0, &s1).unwrap();
    let iterates: Vec<Vector> = (1..=30)
        .map(|k| naive_iterative_step(&ws, &s0, &s1, k).unwrap().0.p)
        .collect();
    let ratios = observed_ratios(&iterates, &exact.p, &ctau);
    assert!(!ratios.is_empty());
    for r in ratios {
        assert!(r <= omega + 1e-6, "ratio {r}");
    }
}

#[test]
fn every_scheme_preserves_equilibrium() {
    let mut rng = Rng::new(5);
    let base = model_system(1.0).unwrap();
    let sys = base
        .with_rhs(Forcing::Constant(rng.vector(3)), Forcing::Constant(rng.vector(1)))
        .unwrap();
    let initial = solve_static(&sys, 0.0).unwrap();
    let grid = TimeGrid::new(1.0 / 16.0, 16).unwrap();
    for scheme in Scheme::ALL {
        let cfg = SchemeConfig::new(scheme).with_k(3);
        let traj = integrate(&sys, &grid, &cfg, &initial).unwrap();
        assert!(traj.is_complete());
        for s in &traj.states {
            assert!(
                rel(&State::new(0.0, s.u.clone(), s.p.clone()), &initial) < 1e-10,
                "{scheme} drifted at t = {}",
                s.t
            );
        }
    }
}

#[test]
fn semi_explicit_diverges_beyond_one_third() {
    let sys = model_system(0.5).unwrap();
    let initial = solve_static(&sys, 0.0).unwrap();
    let grid = TimeGrid::uniform(1.0, 1024).unwrap();
    let traj = integrate(&sys, &grid, &SchemeConfig::new(Scheme::SemiExplicitBdf2), &initial).unwrap();
    assert!(traj.diverged);
}
