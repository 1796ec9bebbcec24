//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero when any
//! criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use poroiter_core::harness::{
    random_system, run_convergence, run_lemma_checks, run_runtime_comparison, run_stability,
    RunConfig,
};
use poroiter_core::integrators::{
    bdf2_implicit_step, bdf2_semi_explicit_step, implicit_euler_step, increment_scheme_step,
    integrate, novel_scheme_step, novel_scheme_sweeps, StepWorkspace,
};
use poroiter_core::linalg::weighted_norm;
use poroiter_core::problems::{model_problem, model_system, ProblemKind};
use poroiter_core::rng::Rng;
use poroiter_core::spectral::theoretical_critical_omega;
use poroiter_core::system::{
    assemble_ctau, check_consistency, coupling_strength, min_inner_iterations, relaxation_gamma,
    solve_static, Forcing, PoroSystem, Scheme, SchemeConfig, State, TimeGrid,
};
use poroiter_core::Result;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { passed, detail })
}

fn rel(a: &State, b: &State) -> f64 {
    let num = ((&a.u - &b.u).norm_squared() + (&a.p - &b.p).norm_squared()).sqrt();
    num / (b.u.norm_squared() + b.p.norm_squared()).sqrt().max(1e-300)
}

fn equivalence() -> Result<Outcome> {
    let mut rng = Rng::new(1);
    let mut cases: Vec<(PoroSystem, f64, State, State)> = Vec::new();
    for _ in 0..100 {
        let sys = random_system(&mut rng, 12)?;
        let (n_u, n_p) = (sys.n_u(), sys.n_p());
        let sys = sys.with_rhs(Forcing::Sine(rng.vector(n_u)), Forcing::Sine(rng.vector(n_p)))?;
        let tau = rng.uniform(0.01, 0.3);
        let s0 = State::new(0.2, rng.vector(n_u), rng.vector(n_p));
        let s1 = State::new(0.2 + tau, rng.vector(n_u), rng.vector(n_p));
        cases.push((sys, tau, s0, s1));
    }
    let model = model_system(1.0)?;
    let tau = 1.0 / 64.0;
    cases.push((model.clone(), tau, solve_static(&model, 0.0)?, solve_static(&model, tau)?));

    let (mut semi, mut incr): (f64, f64) = (0.0, 0.0);
    for (sys, tau, s0, s1) in &cases {
        let ws = StepWorkspace::new(sys, *tau)?;
        let (a, _) = novel_scheme_step(&ws, s0, s1, 1, 0.5)?;
        let (b, _) = bdf2_semi_explicit_step(&ws, s0, s1)?;
        semi = semi.max(rel(&a, &b));
        for k in 1..=5 {
            for gamma in [0.3, 0.7, 1.0] {
                let (a, _) = novel_scheme_step(&ws, s0, s1, k, gamma)?;
                let (b, _) = increment_scheme_step(&ws, s0, s1, k, gamma)?;
                incr = incr.max(rel(&b, &a));
            }
        }
    }
    outcome(
        semi <= 1e-12 && incr <= 1e-12,
        format!("novel(K=1) vs semi-explicit {semi:.2e}, increment vs direct {incr:.2e} (limit 1e-12)"),
    )
}

fn fixed_point_limit() -> Result<Outcome> {
    let problem = model_problem(1.0)?;
    let sys = &problem.system;
    let omega = coupling_strength(sys, 0.0)?;
    let gamma = relaxation_gamma(omega)?;
    let tau = 1.0 / 32.0;
    let grid = TimeGrid::new(tau, 32)?;
    let traj = integrate(sys, &grid, &SchemeConfig::new(Scheme::ImplicitBdf2), &problem.initial)?;
    let ws = StepWorkspace::new(sys, tau)?;
    let ctau = assemble_ctau(sys, tau);
    let bound = omega / (2.0 + omega);
    let (mut dev, mut ratio): (f64, f64) = (0.0, 0.0);
    for w in traj.states.windows(2) {
        let (exact, _) = bdf2_implicit_step(&ws, &w[0], &w[1])?;
        let trace = novel_scheme_sweeps(&ws, &w[0], &w[1], 50, gamma)?;
        dev = dev.max(rel(&trace.state, &exact));
        let increments: Vec<f64> = trace
            .p_relaxed
            .windows(2)
            .map(|p| weighted_norm(&(&p[1] - &p[0]), &ctau))
            .collect::<Result<_>>()?;
        let floor = 1e-11 * weighted_norm(&exact.p, &ctau)?.max(1.0);
        for d in increments.windows(2).filter(|d| d[0] > floor && d[1] > floor) {
            ratio = ratio.max(d[1] / d[0]);
        }
    }
    outcome(
        dev <= 1e-10 && ratio <= bound + 1e-6,
        format!(
            "K=50 deviation {dev:.2e} (limit 1e-10), contraction {ratio:.6} (limit {:.6})",
            bound + 1e-6
        ),
    )
}

fn lemma_suite() -> Result<Outcome> {
    let report = run_lemma_checks(0, None)?;
    let failed = report.failures().count();
    outcome(
        failed == 0,
        format!("{} checks, {failed} failed", report.checks.len()),
    )
}

fn order_reproduction() -> Result<Outcome> {
    let mut notes = Vec::new();
    let mut ok = true;
    for w in [0.3, 1.0] {
        let k = min_inner_iterations(coupling_strength(&model_system(w)?, 0.0)?);
        let cfg = RunConfig {
            omega: w,
            schemes: vec![Scheme::ImplicitBdf2, Scheme::FixedStressBdf2, Scheme::NovelIterative],
            ks: vec![k],
            ..RunConfig::default()
        };
        let report = run_convergence(&cfg)?;
        for (scheme, kk) in [
            (Scheme::ImplicitBdf2, None),
            (Scheme::FixedStressBdf2, None),
            (Scheme::NovelIterative, Some(k)),
        ] {
            let eoc = report.terminal_eoc(scheme, kk).unwrap_or(f64::NAN);
            ok &= (1.75..=2.25).contains(&eoc);
            let label = kk.map_or(String::new(), |k| format!(" K={k}"));
            notes.push(format!("{scheme}{label}@{w}={eoc:.3}"));
        }
    }
    let cfg = RunConfig {
        omega: 0.2,
        schemes: vec![Scheme::NaiveIterative],
        ks: vec![1],
        ..RunConfig::default()
    };
    let eoc = run_convergence(&cfg)?
        .terminal_eoc(Scheme::NaiveIterative, Some(1))
        .unwrap_or(f64::NAN);
    ok &= (0.8..=1.2).contains(&eoc);
    notes.push(format!("naive K=1@0.2={eoc:.3}"));
    outcome(ok, format!("terminal EOC {}", notes.join(", ")))
}

fn stability_against(problem: ProblemKind, targets: &[f64], band: f64, check_theory: bool) -> Result<Outcome> {
    let cfg = RunConfig {
        problem,
        ks: (1..=targets.len()).collect(),
        ..RunConfig::default()
    };
    let report = run_stability(&cfg)?;
    let mut ok = true;
    let mut notes = Vec::new();
    for (i, &target) in targets.iter().enumerate() {
        let k = i + 1;
        let observed = report.critical(k);
        let theory = theoretical_critical_omega(k);
        let good = observed.is_some_and(|w| {
            (w - target).abs() <= band * target && (!check_theory || w >= theory)
        });
        ok &= good;
        notes.push(format!(
            "K={k}: {} vs {target} [{}]",
            observed.map_or("none".into(), |w| format!("{w:.3}")),
            if good { "ok" } else { "off" }
        ));
    }
    outcome(ok, notes.join(", "))
}

fn initialization() -> Result<Outcome> {
    let problem = model_problem(0.3)?;
    let sys = &problem.system;
    let grid = TimeGrid::new(1.0 / 16.0, 4)?;
    let traj = integrate(sys, &grid, &SchemeConfig::new(Scheme::NovelIterative), &problem.initial)?;
    let r0 = check_consistency(sys, &traj.states[0]);
    let r1 = check_consistency(sys, &traj.states[1]);

    let mut cs = Vec::new();
    for e in 4..=10 {
        let tau = 2f64.powi(-e);
        let p1 = implicit_euler_step(sys, tau, &problem.initial)?.p;
        let fine = TimeGrid::new(tau / 64.0, 64)?;
        let reference = integrate(sys, &fine, &SchemeConfig::new(Scheme::Midpoint), &problem.initial)?;
        let err = weighted_norm(&(&p1 - &reference.last().p), &assemble_ctau(sys, tau))?;
        cs.push(err / (tau * tau));
    }
    let stable = cs.windows(2).all(|c| (c[1] / c[0] - 1.0).abs() <= 0.2);
    outcome(
        r0 <= 1e-10 && r1 <= 1e-10 && stable,
        format!(
            "residual n=0 {r0:.1e}, n=1 {r1:.1e}; c = {}",
            cs.iter().map(|c| format!("{c:.4}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn solve_counts() -> Result<Outcome> {
    let cfg = RunConfig {
        problem: ProblemKind::UnitSquare { n: 16 },
        schemes: vec![Scheme::NovelIterative, Scheme::ImplicitBdf2],
        ks: vec![2, 3],
        taus: vec![1.0 / 8.0, 1.0 / 16.0],
        mesh_sizes: vec![16],
        repetitions: 1,
        ..RunConfig::default()
    };
    let report = run_runtime_comparison(&cfg)?;
    let mut ok = !report.rows.is_empty();
    for r in &report.rows {
        ok &= match r.scheme {
            Scheme::NovelIterative => r.spd_solves == 2 * r.k.unwrap_or(0) * r.updates && r.coupled_solves == 0,
            Scheme::ImplicitBdf2 => r.coupled_solves == r.updates && r.spd_solves == 0,
            _ => false,
        };
    }
    outcome(
        ok,
        format!("{} rows: novel 2KN SPD solves, implicit N coupled solves", report.rows.len()),
    )
}

fn main() -> ExitCode {
    type Criterion = (u32, &'static str, Duration, fn() -> Result<Outcome>);
    let criteria: [Criterion; 8] = [
        (1, "scheme equivalences", Duration::from_secs(10), equivalence),
        (2, "fixed-point limit", Duration::from_secs(10), fixed_point_limit),
        (3, "lemma suite", Duration::from_secs(30), lemma_suite),
        (4, "order reproduction", Duration::from_secs(120), order_reproduction),
        (5, "model stability thresholds", Duration::from_secs(300), || {
            stability_against(ProblemKind::Model, &[0.32, 2.8, 2.5, 7.3, 5.6], 0.15, true)
        }),
        (6, "unit-square stability thresholds", Duration::from_secs(600), || {
            stability_against(ProblemKind::UnitSquare { n: 8 }, &[0.3, 2.9, 2.6, 8.0], 0.2, false)
        }),
        (7, "consistent initialization", Duration::from_secs(30), initialization),
        (8, "solve-count identities", Duration::from_secs(60), solve_counts),
    ];
    let mut all = true;
    for (id, name, budget, run) in criteria {
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed();
        let (passed, detail) = match result {
            Ok(o) => (o.passed && elapsed <= budget, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        all &= passed;
        println!(
            "{} criterion {id} ({name}): {detail} [{:.1}s, budget {}s]",
            if passed { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
