//! Iteration and recursion matrices of the relaxed scheme, their weighted
//! norms, and the numerical stability sweep.

use log::debug;
use nalgebra::Complex;

use crate::error::{Error, Result};
use crate::integrators::integrate;
use crate::linalg::{symmetric_eigenvalues, DenseMatrix, SpdSolver, SymmetricSqrt, Vector};
use crate::system::{
    assemble_ctau, coupling_strength, iteration_bound_holds, relaxation_gamma, Init, PoroSystem, Scheme, SchemeConfig,
    State, TimeGrid,
};

/// Largest pressure dimension accepted for dense assembly.
pub const MAX_DENSE_PRESSURE: usize = 5000;

/// Slack allowed on each norm bound.
pub const NORM_BOUND_SLACK: f64 = 1e-10;

/// Eigenvector condition number above which the eigenvalue-map cross-check of
/// the recursion matrix is skipped.
pub const EIGENVECTOR_CONDITION_LIMIT: f64 = 1e6;

/// Dense iteration matrices for one `(system, τ, γ, K)`.
///
/// * `t = −Cτ⁻¹ D A⁻¹ Dᵀ`
/// * `s = γT + (1−γ)I`
/// * `s_tilde = S^{K−1} + γ Σ_{k=0}^{K−2} S^k`
/// * `script_s`, the `3n_p × 3n_p` block companion
///
/// ```text
///   [ 2TS^{K−1} + I/3   −5/3 TS^{K−1}   1/3 TS^{K−1} ]
///   [ I                  0               0            ]
///   [ 0                  I               0            ]
/// ```
#[derive(Debug, Clone)]
pub struct IterationMatrices {
    pub ctau: DenseMatrix,
    /// `Cτ⁻¹ C`.
    pub ctau_inv_c: DenseMatrix,
    pub t: DenseMatrix,
    pub s: DenseMatrix,
    pub s_tilde: DenseMatrix,
    /// `T S^{K−1}`.
    pub ts: DenseMatrix,
    pub script_s: DenseMatrix,
    pub gamma: f64,
    pub k: usize,
}

pub fn build_iteration_matrices(
    sys: &PoroSystem,
    tau: f64,
    gamma: f64,
    k: usize,
) -> Result<IterationMatrices> {
    let n = sys.n_p();
    if n > MAX_DENSE_PRESSURE {
        return Err(Error::InvalidParameter(format!(
            "dense iteration matrices limited to n_p <= {MAX_DENSE_PRESSURE}, got {n}"
        )));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidParameter(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("K must be >= 1".into()));
    }
    if !(tau >= 0.0) {
        return Err(Error::InvalidParameter(format!("step size must be >= 0, got {tau}")));
    }
    let ctau = assemble_ctau(sys, tau);
    let ctau_solver = SpdSolver::named(&ctau, sys.solver_options(), "C_tau")?;
    let a_inv_dt = sys.a_solver().solve_columns(&sys.d().transpose())?;
    let t = -ctau_solver.solve_columns(&(sys.d() * a_inv_dt))?;
    let ctau_inv_c = ctau_solver.solve_columns(sys.c())?;
    let id = DenseMatrix::identity(n, n);
    let s = &t * gamma + &id * (1.0 - gamma);

    // powers[j] = S^j, j = 0..K−1
    let mut powers = vec![id.clone()];
    for j in 1..k {
        powers.push(&powers[j - 1] * &s);
    }
    let mut s_tilde = powers[k - 1].clone();
    for p in &powers[..k - 1] {
        s_tilde += p * gamma;
    }
    let ts = &t * &powers[k - 1];

    let mut script_s = DenseMatrix::zeros(3 * n, 3 * n);
    script_s
        .view_mut((0, 0), (n, n))
        .copy_from(&(&ts * 2.0 + &id * (1.0 / 3.0)));
    script_s.view_mut((0, n), (n, n)).copy_from(&(&ts * (-5.0 / 3.0)));
    script_s.view_mut((0, 2 * n), (n, n)).copy_from(&(&ts * (1.0 / 3.0)));
    script_s.view_mut((n, 0), (n, n)).copy_from(&id);
    script_s.view_mut((2 * n, n), (n, n)).copy_from(&id);

    Ok(IterationMatrices {
        ctau,
        ctau_inv_c,
        t,
        s,
        s_tilde,
        ts,
        script_s,
        gamma,
        k,
    })
}

/// Measured `Cτ`-weighted operator norms and the four bounds
/// `‖Cτ⁻¹C‖ ≤ 1`, `‖T‖ ≤ ω`, `‖S‖ ≤ 1−γ`, `‖S̃‖ ≤ 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormBoundReport {
    pub ctau_inv_c: f64,
    pub t: f64,
    pub s: f64,
    pub s_tilde: f64,
    pub holds: [bool; 4],
}

impl NormBoundReport {
    pub fn all_hold(&self) -> bool {
        self.holds.iter().all(|&h| h)
    }
}

pub fn verify_norm_bounds(m: &IterationMatrices, omega: f64, gamma: f64) -> Result<NormBoundReport> {
    let w = SymmetricSqrt::new(&m.ctau)?;
    let ctau_inv_c = w.operator_norm(&m.ctau_inv_c);
    let t = w.operator_norm(&m.t);
    let s = w.operator_norm(&m.s);
    let s_tilde = w.operator_norm(&m.s_tilde);
    Ok(NormBoundReport {
        ctau_inv_c,
        t,
        s,
        s_tilde,
        holds: [
            ctau_inv_c <= 1.0 + NORM_BOUND_SLACK,
            t <= omega + NORM_BOUND_SLACK,
            s <= 1.0 - gamma + NORM_BOUND_SLACK,
            s_tilde <= 1.0 + NORM_BOUND_SLACK,
        ],
    })
}

/// `|μ|` over the companion eigenvalues `1/3` and `λ ± sqrt(λ² − λ)`.
pub fn eigen_map_radius(lambda: f64) -> f64 {
    let l = Complex::new(lambda, 0.0);
    let root = (l * l - l).sqrt();
    (l + root).norm().max((l - root).norm()).max(1.0 / 3.0)
}

/// Norm and spectral data of the block recursion matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecursionNorm {
    /// `‖𝒮‖` induced by `diag(Cτ, Cτ, Cτ)`.
    pub operator_norm: f64,
    /// Spectral radius from a dense nonsymmetric eigensolve of `𝒮`.
    pub spectral_radius: f64,
    /// `max_i max(1/3, |λ_i ± sqrt(λ_i² − λ_i)|)` over the eigenvalues of `T S^{K−1}`.
    pub eigen_map_radius: f64,
    /// Estimated eigenvector condition number of `𝒮`.
    pub eigenvector_condition: f64,
    /// Whether the two spectral radii were compared (skipped when the
    /// eigenvector condition number exceeds [`EIGENVECTOR_CONDITION_LIMIT`]).
    pub cross_checked: bool,
}

/// Computes the recursion-matrix norm and spectral radius two ways.
///
/// The induced norm is never below one (take `x = (0, v, 0)`); the contraction
/// property is carried by the spectral radius, which is computed directly and
/// through the eigenvalue map. When the eigenbasis is well conditioned the two
/// radii must agree to `1e−8`, otherwise an error is returned.
pub fn script_s_norm(m: &IterationMatrices) -> Result<RecursionNorm> {
    let n = m.ctau.nrows();
    let w = SymmetricSqrt::new(&m.ctau)?;
    let mut big_sqrt = DenseMatrix::zeros(3 * n, 3 * n);
    let mut big_inv = DenseMatrix::zeros(3 * n, 3 * n);
    for b in 0..3 {
        big_sqrt.view_mut((b * n, b * n), (n, n)).copy_from(&w.sqrt);
        big_inv.view_mut((b * n, b * n), (n, n)).copy_from(&w.inv_sqrt);
    }
    let operator_norm = crate::linalg::spectral_norm(&(&big_sqrt * &m.script_s * &big_inv));

    let spectral_radius = crate::linalg::general_eigenvalues(&m.script_s)?
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if !spectral_radius.is_finite() {
        return Err(Error::NonFinite("recursion matrix eigenvalues"));
    }

    // T S^{K−1} is similar to a symmetric matrix through Cτ^{1/2}.
    let tilde = w.congruent(&m.ts);
    let tilde = (&tilde + tilde.transpose()) * 0.5;
    let lambdas = symmetric_eigenvalues(&tilde);
    let eigen_map = lambdas.iter().map(|&l| eigen_map_radius(l)).fold(0.0, f64::max);

    let (cmin, cmax) = crate::linalg::symmetric_extremes(&m.ctau);
    let basis_condition = (cmax / cmin).sqrt();
    let block_condition = lambdas
        .iter()
        .map(|&l| companion_eigenvector_condition(l))
        .fold(1.0, f64::max);
    let eigenvector_condition = basis_condition * block_condition;

    let cross_checked = eigenvector_condition <= EIGENVECTOR_CONDITION_LIMIT;
    if cross_checked {
        let gap = (spectral_radius - eigen_map).abs();
        if gap > 1e-8 * spectral_radius.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "recursion matrix spectral radius {spectral_radius} disagrees with the eigenvalue map {eigen_map}"
            )));
        }
    } else {
        debug!(
            "recursion matrix eigenvector condition {eigenvector_condition:.3e} exceeds \
             {EIGENVECTOR_CONDITION_LIMIT:e}; eigenvalue-map cross-check skipped"
        );
    }
    Ok(RecursionNorm {
        operator_norm,
        spectral_radius,
        eigen_map_radius: eigen_map,
        eigenvector_condition,
        cross_checked,
    })
}

/// Condition number of the 3×3 eigenvector matrix `[μ², μ, 1]` of the scalar
/// companion; infinite when it is defective.
fn companion_eigenvector_condition(lambda: f64) -> f64 {
    let l = Complex::new(lambda, 0.0);
    let root = (l * l - l).sqrt();
    let mus = [Complex::new(1.0 / 3.0, 0.0), l - root, l + root];
    let v = nalgebra::Matrix3::from_fn(|i, j| {
        let mu = mus[j];
        match i {
            0 => mu * mu,
            1 => mu,
            _ => Complex::new(1.0, 0.0),
        }
    });
    let sv = v.singular_values();
    let (min, max) = (sv.min(), sv.max());
    if min <= f64::EPSILON * max {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Relative gap in the BDF-2 polarization identity
///
/// ```text
/// 2 (BDF₂ηⁿ⁺²)ᵀ B ηⁿ⁺² = BDF₂‖ηⁿ⁺²‖²_B + ‖ηⁿ⁺² − ηⁿ⁺¹‖²_B − ‖ηⁿ⁺¹ − ηⁿ‖²_B
///                        + ½‖ηⁿ⁺² − 2ηⁿ⁺¹ + ηⁿ‖²_B
/// ```
///
/// with `BDF₂xⁿ⁺² = 3/2 xⁿ⁺² − 2xⁿ⁺¹ + 1/2 xⁿ`.
pub fn polarization_gap(b: &DenseMatrix, eta0: &Vector, eta1: &Vector, eta2: &Vector) -> f64 {
    let q = |x: &Vector| x.dot(&(b * x));
    let bdf = eta2 * 1.5 - eta1 * 2.0 + eta0 * 0.5;
    let lhs = 2.0 * bdf.dot(&(b * eta2));
    let (n0, n1, n2) = (q(eta0), q(eta1), q(eta2));
    let rhs = 1.5 * n2 - 2.0 * n1 + 0.5 * n0 + q(&(eta2 - eta1)) - q(&(eta1 - eta0))
        + 0.5 * q(&(eta2 - eta1 * 2.0 + eta0));
    (lhs - rhs).abs() / (n0 + n1 + n2).max(f64::MIN_POSITIVE)
}

/// Largest `ω` with `3ω^K < (2+ω)^{K−1}` (the supremum of that set).
pub fn theoretical_critical_omega(k: usize) -> f64 {
    assert!(k >= 1, "K must be >= 1");
    if k == 1 {
        return 1.0 / 3.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while iteration_bound_holds(hi, k) {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if iteration_bound_holds(mid, k) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    lo
}

/// Outcome of integrating one `(ω, K)` cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityVerdict {
    /// Family parameter of the integrated member.
    pub parameter: f64,
    /// Coupling strength `ω(0)` of that member.
    pub omega: f64,
    pub k: usize,
    pub stable: bool,
    pub max_trajectory_norm: f64,
}

/// Settings of a sweep: grid and bisection resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSettings {
    pub steps: usize,
    pub horizon: f64,
    pub resolution: f64,
    pub divergence_factor: f64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            steps: 1 << 10,
            horizon: 1.0,
            resolution: 1e-2,
            divergence_factor: crate::system::DIVERGENCE_FACTOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub k: usize,
    /// Largest family parameter classified stable.
    pub critical_parameter: f64,
    /// Coupling strength `ω(0)` of that member.
    pub critical_omega: f64,
    /// Every classified cell, in evaluation order.
    pub verdicts: Vec<StabilityVerdict>,
}

/// Integrates the relaxed scheme with `K` inner iterations for the family
/// member with the given parameter. The parameter plays the role of `ω` in
/// `γ = 2/(2+ω)`; the member's coupling strength `ω(0)` is recorded
/// alongside.
pub fn classify<F>(
    family: &F,
    parameter: f64,
    k: usize,
    settings: &SweepSettings,
) -> Result<StabilityVerdict>
where
    F: Fn(f64) -> Result<(PoroSystem, State)>,
{
    let (sys, initial) = family(parameter)?;
    let omega = coupling_strength(&sys, 0.0)?;
    let grid = TimeGrid::uniform(settings.horizon, settings.steps)?;
    let mut cfg = SchemeConfig::new(Scheme::NovelIterative)
        .with_k(k)
        .with_gamma(relaxation_gamma(parameter)?)
        .with_init(Init::ImplicitEuler { substeps: 1 });
    cfg.divergence_factor = settings.divergence_factor;
    let traj = integrate(&sys, &grid, &cfg, &initial)?;
    Ok(StabilityVerdict {
        parameter,
        omega,
        k,
        stable: !traj.diverged,
        max_trajectory_norm: traj.max_norm,
    })
}

/// Bisection over family parameters in `[lo, hi]` for the stability
/// transition of the relaxed scheme with `K` inner iterations. `lo` must be
/// stable and `hi` unstable. The bracket is refined until its width is below
/// `settings.resolution`.
pub fn stability_sweep<F>(
    family: &F,
    k: usize,
    lo: f64,
    hi: f64,
    settings: &SweepSettings,
) -> Result<SweepResult>
where
    F: Fn(f64) -> Result<(PoroSystem, State)>,
{
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidParameter(format!("bad bracket [{lo}, {hi}]")));
    }
    let mut verdicts = Vec::new();
    let lo_v = classify(family, lo, k, settings)?;
    verdicts.push(lo_v);
    let hi_v = classify(family, hi, k, settings)?;
    verdicts.push(hi_v);
    if !lo_v.stable || hi_v.stable {
        return Err(Error::NoTransition { k, lo, hi });
    }
    let (mut a, mut b) = (lo_v, hi_v);
    while b.parameter - a.parameter > settings.resolution {
        let v = classify(family, 0.5 * (a.parameter + b.parameter), k, settings)?;
        verdicts.push(v);
        if v.stable {
            a = v;
        } else {
            b = v;
        }
    }
    Ok(SweepResult {
        k,
        critical_parameter: a.parameter,
        critical_omega: a.omega,
        verdicts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::Forcing;

    fn decoupled(n: usize) -> PoroSystem {
        PoroSystem::builder(
            DenseMatrix::identity(n, n) * 2.0,
            DenseMatrix::identity(n, n),
            DenseMatrix::identity(n, n),
            DenseMatrix::zeros(n, n),
        )
        .require_full_rank(false)
        .build()
        .unwrap()
    }

    #[test]
    fn decoupled_matrices() {
        let gamma = 0.4;
        let m = build_iteration_matrices(&decoupled(2), 0.1, gamma, 3).unwrap();
        assert_eq!(m.t.amax(), 0.0);
        assert!((&m.s - DenseMatrix::identity(2, 2) * (1.0 - gamma)).amax() < 1e-15);
        assert!((&m.s_tilde - DenseMatrix::identity(2, 2)).amax() < 1e-15);
        let r = verify_norm_bounds(&m, 0.0, gamma).unwrap();
        assert!(r.all_hold());
        assert!(r.t.abs() < 1e-15);
        assert!((r.s - (1.0 - gamma)).abs() < 1e-12);
        assert!((r.s_tilde - 1.0).abs() < 1e-12);
        let s = script_s_norm(&m).unwrap();
        assert!((s.spectral_radius - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn k_one_gives_identity_s_tilde() {
        let sys = PoroSystem::new(
            DenseMatrix::identity(2, 2),
            DenseMatrix::identity(1, 1),
            DenseMatrix::identity(1, 1),
            DenseMatrix::from_row_slice(1, 2, &[0.5, 0.1]),
            Forcing::Zero(2),
            Forcing::Zero(1),
        )
        .unwrap();
        let m = build_iteration_matrices(&sys, 0.0, 0.8, 1).unwrap();
        assert_eq!(m.s_tilde, DenseMatrix::identity(1, 1));
        // n_p = 1: T = −ω.
        assert!((m.t[(0, 0)] + 0.26).abs() < 1e-15);
    }

    #[test]
    fn eigen_map_boundary() {
        assert!((eigen_map_radius(-1.0 / 3.0) - 1.0).abs() < 1e-15);
        assert_eq!(eigen_map_radius(0.0), 1.0 / 3.0);
        assert!(eigen_map_radius(-0.3) < 1.0);
        assert!(eigen_map_radius(0.5) < 1.0);
        assert!((eigen_map_radius(0.5) - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn theoretical_bounds() {
        assert_eq!(theoretical_critical_omega(1), 1.0 / 3.0);
        for k in 2..=6 {
            let w = theoretical_critical_omega(k);
            assert!(iteration_bound_holds(w * (1.0 - 1e-9), k));
            assert!(!iteration_bound_holds(w * (1.0 + 1e-9), k));
        }
    }

    #[test]
    fn polarization_holds_with_squared_norm() {
        let b = DenseMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let e = |x: f64, y: f64| Vector::from_vec(vec![x, y]);
        let gap = polarization_gap(&b, &e(1.0, -2.0), &e(0.3, 0.7), &e(-1.5, 0.2));
        assert!(gap < 1e-14);
    }

    #[test]
    fn rejects_bad_parameters() {
        let sys = decoupled(1);
        assert!(build_iteration_matrices(&sys, 0.1, 1.5, 2).is_err());
        assert!(build_iteration_matrices(&sys, 0.1, 0.5, 0).is_err());
    }
}
