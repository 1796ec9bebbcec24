use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigenvalues, DenseMatrix, SymmetricSqrt};
use crate::problems::model_system;
use crate::rng::Rng;
use crate::spectral::{
    build_iteration_matrices, polarization_gap, script_s_norm, verify_norm_bounds,
    IterationMatrices, NORM_BOUND_SLACK,
};
use crate::system::{
    coupling_strength, iteration_bound_holds, min_inner_iterations, relaxation_gamma, PoroSystem,
};

use super::write_text;

/// Random instances drawn per lemma run.
pub const LEMMA_RANDOM_INSTANCES: usize = 50;

/// Model-problem coupling values checked in every run.
pub const LEMMA_MODEL_OMEGAS: [f64; 4] = [0.1, 1.0 / 3.0, 1.0, 2.8];

/// Tolerance on the relative polarization-identity gap.
pub const POLARIZATION_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaCheck {
    pub suite: &'static str,
    pub instance: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LemmaReport {
    pub checks: Vec<LemmaCheck>,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &LemmaCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// `suite,instance,passed,detail`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("suite,instance,passed,detail\n");
        for c in &self.checks {
            let _ = writeln!(s, "{},{},{},{}", c.suite, c.instance, c.passed, c.detail);
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &self.to_csv())
    }

    /// Commas in labels would split CSV fields, so they become spaces.
    fn push(&mut self, suite: &'static str, instance: &str, passed: bool, detail: String) {
        self.checks.push(LemmaCheck {
            suite,
            instance: instance.replace(',', " "),
            passed,
            detail: detail.replace(',', " "),
        });
    }
}

/// Random SPD `A`, `B`, `C` and a dense `D` with `n_p ≤ n_u ≤ max_dim`.
pub fn random_system(rng: &mut Rng, max_dim: usize) -> Result<PoroSystem> {
    let n_p = rng.range(1, max_dim);
    let n_u = rng.range(n_p, max_dim);
    let a = rng.spd(n_u, 0.1);
    let b = rng.spd(n_p, 0.1);
    let c = rng.spd(n_p, 0.1);
    let d = rng.matrix(n_p, n_u);
    PoroSystem::builder(a, b, c, d).build()
}

/// Eigenvalues of `Cτ^{1/2} M Cτ^{−1/2}` (symmetrized).
fn weighted_spectrum(m: &IterationMatrices, x: &DenseMatrix) -> Result<Vec<f64>> {
    let w = SymmetricSqrt::new(&m.ctau)?;
    let y = w.congruent(x);
    Ok(symmetric_eigenvalues(&((&y + y.transpose()) * 0.5)))
}

/// Runs every matrix-level check for one `(system, τ, ω, γ, K)`.
fn check_instance(
    report: &mut LemmaReport,
    name: &str,
    sys: &PoroSystem,
    tau: f64,
    omega: f64,
    gamma: f64,
    k: usize,
) -> Result<()> {
    let m = build_iteration_matrices(sys, tau, gamma, k)?;
    let b = verify_norm_bounds(&m, omega, gamma)?;
    report.push(
        "norm_bounds",
        name,
        b.all_hold(),
        format!(
            "|Ctau^-1 C|={:.6e} |T|={:.6e}<=omega={omega:.6e} |S|={:.6e}<=1-gamma={:.6e} |Stilde|={:.6e}",
            b.ctau_inv_c,
            b.t,
            b.s,
            1.0 - gamma,
            b.s_tilde
        ),
    );

    let t = weighted_spectrum(&m, &m.t)?;
    let (tmin, tmax) = (t[0], t[t.len() - 1]);
    let slack = NORM_BOUND_SLACK * omega.max(1.0);
    report.push(
        "spectrum_T",
        name,
        tmin >= -omega - slack && tmax <= slack,
        format!("eig(T) in [{tmin:.6e}, {tmax:.6e}]"),
    );
    let s = weighted_spectrum(&m, &m.s)?;
    let (smin, smax) = (s[0], s[s.len() - 1]);
    report.push(
        "spectrum_S",
        name,
        smin >= -(1.0 - gamma) - NORM_BOUND_SLACK && smax <= 1.0 - gamma + NORM_BOUND_SLACK,
        format!("eig(S) in [{smin:.6e}, {smax:.6e}]"),
    );

    if iteration_bound_holds(omega, k) {
        let r = script_s_norm(&m)?;
        report.push(
            "recursion_matrix",
            name,
            r.spectral_radius < 1.0,
            format!(
                "K={k} rho={:.6e} eigen_map={:.6e} cross_checked={} weighted_norm={:.6e}",
                r.spectral_radius, r.eigen_map_radius, r.cross_checked, r.operator_norm
            ),
        );
    }
    Ok(())
}

fn check_polarization(report: &mut LemmaReport, name: &str, sys: &PoroSystem, rng: &mut Rng) {
    let n = sys.n_p();
    let (e0, e1, e2) = (rng.vector(n), rng.vector(n), rng.vector(n));
    let gap = polarization_gap(sys.b(), &e0, &e1, &e2);
    report.push(
        "polarization",
        name,
        gap <= POLARIZATION_TOLERANCE,
        format!("relative gap {gap:.3e}"),
    );
}

/// Matrix bounds, the recursion-matrix contraction, and the BDF-2
/// polarization identity on seeded random systems, the model problem and
/// uncoupled systems.
///
/// `gamma_override` replaces `2/(2+ω)` everywhere and must lie in `(0, 1]`;
/// anything else is rejected before any check runs.
pub fn run_lemma_checks(seed: u64, gamma_override: Option<f64>) -> Result<LemmaReport> {
    if let Some(g) = gamma_override {
        if !(g > 0.0 && g <= 1.0) {
            return Err(Error::InvalidParameter(format!("gamma must lie in (0, 1], got {g}")));
        }
    }
    let gamma_for = |omega: f64| gamma_override.map_or_else(|| relaxation_gamma(omega), Ok);
    let mut rng = Rng::new(seed);
    let mut report = LemmaReport::default();

    for i in 0..LEMMA_RANDOM_INSTANCES {
        let sys = random_system(&mut rng, 12)?;
        let tau = if i % 5 == 0 { 0.0 } else { rng.uniform(0.0, 0.5) };
        let omega = coupling_strength(&sys, tau)?;
        let k = min_inner_iterations(omega);
        let name = format!("random#{i}(n_u={} n_p={} tau={tau:.4})", sys.n_u(), sys.n_p());
        check_instance(&mut report, &name, &sys, tau, omega, gamma_for(omega)?, k)?;
        check_polarization(&mut report, &name, &sys, &mut rng);
    }

    for omega in LEMMA_MODEL_OMEGAS {
        let sys = model_system(omega)?;
        let k = min_inner_iterations(omega);
        let name = format!("model(omega={omega:.6})");
        check_instance(&mut report, &name, &sys, 0.0, omega, gamma_for(omega)?, k)?;
        check_polarization(&mut report, &name, &sys, &mut rng);
    }

    // Uncoupled systems: T = 0, so any γ is admissible.
    for (i, n) in [1usize, 4].into_iter().enumerate() {
        let sys = PoroSystem::builder(
            rng.spd(n, 0.1),
            rng.spd(n, 0.1),
            rng.spd(n, 0.1),
            DenseMatrix::zeros(n, n),
        )
        .require_full_rank(false)
        .build()?;
        let gamma = gamma_override.unwrap_or(0.5);
        let name = format!("uncoupled#{i}(n={n})");
        check_instance(&mut report, &name, &sys, 0.1, 0.0, gamma, 3)?;
        let m = build_iteration_matrices(&sys, 0.1, gamma, 3)?;
        let b = verify_norm_bounds(&m, 0.0, gamma)?;
        let r = script_s_norm(&m)?;
        let ok = b.t == 0.0
            && (b.s - (1.0 - gamma)).abs() <= 1e-12
            && (b.s_tilde - 1.0).abs() <= 1e-12
            && (r.spectral_radius - 1.0 / 3.0).abs() <= 1e-12;
        report.push(
            "uncoupled_equalities",
            &name,
            ok,
            format!(
                "|T|={:.3e} |S|={:.12} |Stilde|={:.12} rho={:.12}",
                b.t, b.s, b.s_tilde, r.spectral_radius
            ),
        );
        check_polarization(&mut report, &name, &sys, &mut rng);
    }
    Ok(report)
}
