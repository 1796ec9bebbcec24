//! The semi-discrete poroelastic system
//!
//! ```text
//!   A u      − Dᵀ p     = f(t)
//!   D u̇ + C ṗ + B p     = g(t)
//! ```
//!
//! with its spectral constants, coupling strength and scheme parameters.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{
    is_symmetric, min_singular_value, power_iteration, spectral_norm, symmetric_extremes,
    DenseMatrix, SolverOptions, SpdSolver, Vector, DIRECT_THRESHOLD, POWER_MAX_ITER,
    POWER_TOLERANCE,
};

/// Relative symmetry tolerance applied to A, B and C.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// `D` is rank deficient when `σ_min(D) ≤ RANK_TOLERANCE · ‖D‖₂`.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// A time-dependent right-hand side.
#[derive(Clone)]
pub enum Forcing {
    Zero(usize),
    Constant(Vector),
    /// `sin(t) · v`
    Sine(Vector),
    Custom {
        dim: usize,
        eval: Arc<dyn Fn(f64) -> Vector + Send + Sync>,
    },
}

impl Forcing {
    pub fn custom(dim: usize, eval: impl Fn(f64) -> Vector + Send + Sync + 'static) -> Self {
        Forcing::Custom {
            dim,
            eval: Arc::new(eval),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Forcing::Zero(n) => *n,
            Forcing::Constant(v) | Forcing::Sine(v) => v.len(),
            Forcing::Custom { dim, .. } => *dim,
        }
    }

    pub fn eval(&self, t: f64) -> Vector {
        match self {
            Forcing::Zero(n) => Vector::zeros(*n),
            Forcing::Constant(v) => v.clone(),
            Forcing::Sine(v) => v * t.sin(),
            Forcing::Custom { eval, .. } => eval(t),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Forcing::Zero(_) => true,
            Forcing::Constant(v) | Forcing::Sine(v) => v.iter().all(|&x| x == 0.0),
            Forcing::Custom { .. } => false,
        }
    }
}

impl fmt::Debug for Forcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Forcing::Zero(n) => write!(f, "Zero({n})"),
            Forcing::Constant(v) => write!(f, "Constant(len {})", v.len()),
            Forcing::Sine(v) => write!(f, "Sine(len {})", v.len()),
            Forcing::Custom { dim, .. } => write!(f, "Custom(dim {dim})"),
        }
    }
}

/// Extremal eigenvalues of A, B, C and the spectral norm of D.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralConstants {
    pub c_a: f64,
    pub c_b: f64,
    pub c_c: f64,
    pub big_c_a: f64,
    pub big_c_b: f64,
    pub big_c_c: f64,
    pub big_c_d: f64,
}

/// The matrices and right-hand sides of the system, validated on construction.
#[derive(Debug, Clone)]
pub struct PoroSystem {
    a: DenseMatrix,
    b: DenseMatrix,
    c: DenseMatrix,
    d: DenseMatrix,
    f: Forcing,
    g: Forcing,
    constants: SpectralConstants,
    a_solver: SpdSolver,
    solver_options: SolverOptions,
}

/// Builder for [`PoroSystem`].
#[derive(Debug, Clone)]
pub struct PoroSystemBuilder {
    a: DenseMatrix,
    b: DenseMatrix,
    c: DenseMatrix,
    d: DenseMatrix,
    f: Option<Forcing>,
    g: Option<Forcing>,
    check_rank: bool,
    solver_options: SolverOptions,
}

impl PoroSystemBuilder {
    pub fn rhs(mut self, f: Forcing, g: Forcing) -> Self {
        self.f = Some(f);
        self.g = Some(g);
        self
    }

    /// Disables the full-row-rank test on `D` (for decoupled test systems).
    pub fn require_full_rank(mut self, check: bool) -> Self {
        self.check_rank = check;
        self
    }

    pub fn solver(mut self, opts: SolverOptions) -> Self {
        self.solver_options = opts;
        self
    }

    pub fn build(self) -> Result<PoroSystem> {
        let (n_u, n_p) = (self.a.nrows(), self.b.nrows());
        let square = |m: &DenseMatrix, n: usize, name: &'static str| {
            if m.nrows() != n || m.ncols() != n {
                Err(Error::DimensionMismatch {
                    context: name,
                    expected: n,
                    found: if m.nrows() != n { m.nrows() } else { m.ncols() },
                })
            } else {
                Ok(())
            }
        };
        square(&self.a, n_u, "matrix A (n_u x n_u)")?;
        square(&self.b, n_p, "matrix B (n_p x n_p)")?;
        square(&self.c, n_p, "matrix C (n_p x n_p)")?;
        if self.d.nrows() != n_p || self.d.ncols() != n_u {
            return Err(Error::DimensionMismatch {
                context: "matrix D (n_p x n_u)",
                expected: n_p * n_u,
                found: self.d.nrows() * self.d.ncols(),
            });
        }
        let f = self.f.unwrap_or(Forcing::Zero(n_u));
        let g = self.g.unwrap_or(Forcing::Zero(n_p));
        if f.dim() != n_u {
            return Err(Error::DimensionMismatch {
                context: "right-hand side f",
                expected: n_u,
                found: f.dim(),
            });
        }
        if g.dim() != n_p {
            return Err(Error::DimensionMismatch {
                context: "right-hand side g",
                expected: n_p,
                found: g.dim(),
            });
        }
        if [&self.a, &self.b, &self.c, &self.d]
            .iter()
            .any(|m| m.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFinite("system matrices"));
        }

        let (c_a, big_c_a) = spd_extremes(&self.a, "A", &self.solver_options)?;
        let (c_b, big_c_b) = spd_extremes(&self.b, "B", &self.solver_options)?;
        let (c_c, big_c_c) = spd_extremes(&self.c, "C", &self.solver_options)?;
        let big_c_d = norm_and_rank(&self.d, self.check_rank, &self.solver_options)?;

        let a_solver = SpdSolver::named(&self.a, &self.solver_options, "A")?;
        Ok(PoroSystem {
            a: self.a,
            b: self.b,
            c: self.c,
            d: self.d,
            f,
            g,
            constants: SpectralConstants {
                c_a,
                c_b,
                c_c,
                big_c_a,
                big_c_b,
                big_c_c,
                big_c_d,
            },
            a_solver,
            solver_options: self.solver_options,
        })
    }
}

fn structural(matrix: &'static str, reason: impl Into<String>) -> Error {
    Error::StructuralAssumption {
        matrix,
        reason: reason.into(),
    }
}

/// Symmetry and definiteness check plus `(λ_min, λ_max)`.
fn spd_extremes(m: &DenseMatrix, name: &'static str, opts: &SolverOptions) -> Result<(f64, f64)> {
    if !is_symmetric(m, SYMMETRY_TOLERANCE) {
        return Err(structural(name, "not symmetric"));
    }
    let n = m.nrows();
    if n == 0 {
        return Err(structural(name, "empty matrix"));
    }
    if n <= DIRECT_THRESHOLD {
        let sym = (m + m.transpose()) * 0.5;
        let (min, max) = symmetric_extremes(&sym);
        if min <= 0.0 || sym.cholesky().is_none() {
            return Err(structural(name, format!("not positive definite (smallest eigenvalue {min:e})")));
        }
        return Ok((min, max));
    }
    // Large: power iteration for λ_max, inverse iteration for λ_min.
    let id = |x: &Vector| Ok(x.clone());
    let max = power_iteration(n, |x| Ok(m * x), id, id, POWER_TOLERANCE, POWER_MAX_ITER)?;
    let solver = SpdSolver::named(m, opts, name)
        .map_err(|_| structural(name, "not positive definite"))?;
    let inv_max = power_iteration(
        n,
        |x| solver.solve(x),
        id,
        id,
        POWER_TOLERANCE,
        POWER_MAX_ITER,
    )
    .map_err(|e| match e {
        Error::NotPositiveDefinite(_) => structural(name, "not positive definite"),
        other => other,
    })?;
    if !(inv_max > 0.0) || !inv_max.is_finite() {
        return Err(structural(name, "not positive definite"));
    }
    Ok((1.0 / inv_max, max))
}

/// `‖D‖₂`, and the full-row-rank test when requested.
fn norm_and_rank(d: &DenseMatrix, check_rank: bool, opts: &SolverOptions) -> Result<f64> {
    let (n_p, n_u) = d.shape();
    if check_rank && n_p > n_u {
        return Err(structural(
            "D",
            format!("{n_p} rows exceed {n_u} columns, so the rank cannot be full"),
        ));
    }
    if n_p.max(n_u) <= DIRECT_THRESHOLD {
        let norm = spectral_norm(d);
        if check_rank {
            let smin = min_singular_value(d);
            if smin <= RANK_TOLERANCE * norm {
                return Err(structural(
                    "D",
                    format!("not of full row rank (smallest singular value {smin:e}, norm {norm:e})"),
                ));
            }
        }
        return Ok(norm);
    }
    let ddt = d * d.transpose();
    let id = |x: &Vector| Ok(x.clone());
    let lmax = power_iteration(n_p, |x| Ok(&ddt * x), id, id, POWER_TOLERANCE, POWER_MAX_ITER)?;
    let norm = lmax.sqrt();
    if check_rank {
        let deficient = || structural("D", "not of full row rank");
        let solver = SpdSolver::named(&ddt, opts, "D Dᵀ").map_err(|_| deficient())?;
        let inv = power_iteration(n_p, |x| solver.solve(x), id, id, POWER_TOLERANCE, POWER_MAX_ITER)
            .map_err(|_| deficient())?;
        let smin = (1.0 / inv).sqrt();
        if !smin.is_finite() || smin <= RANK_TOLERANCE * norm {
            return Err(deficient());
        }
    }
    Ok(norm)
}

impl PoroSystem {
    pub fn builder(a: DenseMatrix, b: DenseMatrix, c: DenseMatrix, d: DenseMatrix) -> PoroSystemBuilder {
        PoroSystemBuilder {
            a,
            b,
            c,
            d,
            f: None,
            g: None,
            check_rank: true,
            solver_options: SolverOptions::default(),
        }
    }

    /// Validates and builds a system with default solver options.
    pub fn new(
        a: DenseMatrix,
        b: DenseMatrix,
        c: DenseMatrix,
        d: DenseMatrix,
        f: Forcing,
        g: Forcing,
    ) -> Result<Self> {
        Self::builder(a, b, c, d).rhs(f, g).build()
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }
    pub fn b(&self) -> &DenseMatrix {
        &self.b
    }
    pub fn c(&self) -> &DenseMatrix {
        &self.c
    }
    pub fn d(&self) -> &DenseMatrix {
        &self.d
    }
    pub fn f(&self) -> &Forcing {
        &self.f
    }
    pub fn g(&self) -> &Forcing {
        &self.g
    }
    pub fn n_u(&self) -> usize {
        self.a.nrows()
    }
    pub fn n_p(&self) -> usize {
        self.b.nrows()
    }
    pub fn constants(&self) -> &SpectralConstants {
        &self.constants
    }
    pub fn solver_options(&self) -> &SolverOptions {
        &self.solver_options
    }

    /// Factorization (or CG setup) of `A`, built once with the system.
    pub fn a_solver(&self) -> &SpdSolver {
        &self.a_solver
    }

    /// Same matrices with different right-hand sides; skips re-validation.
    pub fn with_rhs(&self, f: Forcing, g: Forcing) -> Result<Self> {
        if f.dim() != self.n_u() || g.dim() != self.n_p() {
            return Err(Error::DimensionMismatch {
                context: "replacement right-hand sides",
                expected: self.n_u() + self.n_p(),
                found: f.dim() + g.dim(),
            });
        }
        Ok(Self {
            f,
            g,
            ..self.clone()
        })
    }

    /// `‖u‖_A + ‖p‖_C`, the quantity watched for divergence.
    pub fn energy_norm(&self, s: &State) -> f64 {
        crate::linalg::weighted_norm_sq(&s.u, &self.a).sqrt()
            + crate::linalg::weighted_norm_sq(&s.p, &self.c).sqrt()
    }
}

/// `Cτ = C + (2/3)·τ·B`.
pub fn assemble_ctau(sys: &PoroSystem, tau: f64) -> DenseMatrix {
    sys.c() + sys.b() * (2.0 / 3.0 * tau)
}

/// Pressure dimension up to which [`coupling_strength`] uses a dense
/// symmetric eigensolve instead of power iteration.
pub const DENSE_COUPLING_LIMIT: usize = 600;

/// `ω = λ_max(Cτ⁻¹ D A⁻¹ Dᵀ)`: dense eigensolve of `Cτ^{-1/2} D A⁻¹ Dᵀ Cτ^{-1/2}`
/// for small pressure spaces, power iteration on the pencil otherwise.
pub fn coupling_strength(sys: &PoroSystem, tau: f64) -> Result<f64> {
    if tau < 0.0 || !tau.is_finite() {
        return Err(Error::InvalidParameter(format!("step size must be >= 0, got {tau}")));
    }
    let ctau = assemble_ctau(sys, tau);
    if sys.n_p() <= DENSE_COUPLING_LIMIT {
        let d = sys.d();
        let m = d * sys.a_solver().solve_columns(&d.transpose())?;
        let w = crate::linalg::SymmetricSqrt::new(&ctau)?;
        let y = &w.inv_sqrt * m * &w.inv_sqrt;
        let (_, max) = crate::linalg::symmetric_extremes(&((&y + y.transpose()) * 0.5));
        return Ok(max.max(0.0));
    }
    let ctau_solver = SpdSolver::named(&ctau, sys.solver_options(), "C_tau")?;
    let d = sys.d();
    let a = sys.a_solver();
    power_iteration(
        sys.n_p(),
        |x| Ok(d * a.solve(&(d.transpose() * x))?),
        |z| ctau_solver.solve(z),
        |x| Ok(&ctau * x),
        POWER_TOLERANCE,
        POWER_MAX_ITER,
    )
}

/// `C_D² / (c_A · c_C)`.
pub fn coupling_bound(sys: &PoroSystem) -> f64 {
    let k = sys.constants();
    k.big_c_d * k.big_c_d / (k.c_a * k.c_c)
}

/// `γ = 2/(2+ω)`.
pub fn relaxation_gamma(omega: f64) -> Result<f64> {
    if !(omega >= 0.0) || !omega.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "coupling strength must be finite and >= 0, got {omega}"
        )));
    }
    Ok(2.0 / (2.0 + omega))
}

/// Whether `3 ω^K < (2+ω)^{K−1}`.
pub fn iteration_bound_holds(omega: f64, k: usize) -> bool {
    if k == 1 {
        return 3.0 * omega < 1.0;
    }
    // Divided through by (2+ω)^{K−1} so large K cannot overflow.
    3.0 * (2.0 + omega) * (omega / (2.0 + omega)).powi(k as i32) < 1.0
}

/// Smallest `K ≥ 1` with `3 ω^K < (2+ω)^{K−1}`.
///
/// Returns 1 for `ω < 1/3`. Panics on negative or non-finite input.
pub fn min_inner_iterations(omega: f64) -> usize {
    assert!(
        omega.is_finite() && omega >= 0.0,
        "coupling strength must be finite and >= 0, got {omega}"
    );
    if iteration_bound_holds(omega, 1) {
        return 1;
    }
    // Start just below the closed-form root and walk up.
    let guess = iteration_bound_curve(omega);
    let mut k = if guess.is_finite() {
        (guess.floor() as usize).saturating_sub(1).max(2)
    } else {
        2
    };
    while k > 2 && iteration_bound_holds(omega, k - 1) {
        k -= 1;
    }
    while !iteration_bound_holds(omega, k) {
        k += 1;
    }
    k
}

/// `K(ω) = 1 + (ln ω + ln 3) / (ln(ω+2) − ln ω)`, the real-valued threshold
/// behind [`min_inner_iterations`].
pub fn iteration_bound_curve(omega: f64) -> f64 {
    1.0 + (omega.ln() + 3f64.ln()) / ((omega + 2.0).ln() - omega.ln())
}

/// Time nodes `tⁿ = n·τ`, `n = 0..=N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    tau: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(tau: f64, steps: usize) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidParameter(format!("step size must be > 0, got {tau}")));
        }
        if steps < 2 {
            return Err(Error::InvalidParameter(format!(
                "two-step schemes need N >= 2 steps, got {steps}"
            )));
        }
        Ok(Self { tau, steps })
    }

    /// `N` equal steps covering `[0, horizon]`.
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidParameter("step count must be positive".into()));
        }
        Self::new(horizon / steps as f64, steps)
    }

    /// Grid for a given step; the horizon must be a whole number of steps.
    pub fn with_step(horizon: f64, tau: f64) -> Result<Self> {
        let n = (horizon / tau).round();
        if !(n >= 1.0) || ((n * tau - horizon).abs() > 1e-9 * horizon.abs().max(1.0)) {
            return Err(Error::InvalidParameter(format!(
                "horizon {horizon} is not a multiple of the step {tau}"
            )));
        }
        Self::new(tau, n as usize)
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn steps(&self) -> usize {
        self.steps
    }
    pub fn horizon(&self) -> f64 {
        self.tau * self.steps as f64
    }
    pub fn node(&self, n: usize) -> f64 {
        n as f64 * self.tau
    }
}

/// Displacement and pressure at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub u: Vector,
    pub p: Vector,
}

impl State {
    pub fn new(t: f64, u: Vector, p: Vector) -> Self {
        Self { t, u, p }
    }

    pub fn zeros(t: f64, n_u: usize, n_p: usize) -> Self {
        Self::new(t, Vector::zeros(n_u), Vector::zeros(n_p))
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.u.iter().chain(self.p.iter()).all(|v| v.is_finite())
    }
}

/// Time-stepping schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    ImplicitBdf2,
    SemiExplicitBdf2,
    FixedStressBdf2,
    NaiveIterative,
    NovelIterative,
    IncrementSplitting,
    Midpoint,
}

impl Scheme {
    pub const ALL: [Scheme; 7] = [
        Scheme::ImplicitBdf2,
        Scheme::SemiExplicitBdf2,
        Scheme::FixedStressBdf2,
        Scheme::NaiveIterative,
        Scheme::NovelIterative,
        Scheme::IncrementSplitting,
        Scheme::Midpoint,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::ImplicitBdf2 => "implicit_bdf2",
            Scheme::SemiExplicitBdf2 => "semi_explicit_bdf2",
            Scheme::FixedStressBdf2 => "fixed_stress_bdf2",
            Scheme::NaiveIterative => "naive_iterative",
            Scheme::NovelIterative => "novel_iterative",
            Scheme::IncrementSplitting => "increment_splitting",
            Scheme::Midpoint => "midpoint",
        }
    }

    /// Whether the inner-iteration count `K` applies.
    pub fn uses_k(&self) -> bool {
        matches!(
            self,
            Scheme::NaiveIterative | Scheme::NovelIterative | Scheme::IncrementSplitting
        )
    }

    pub fn is_two_step(&self) -> bool {
        !matches!(self, Scheme::Midpoint)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Ok(match key.as_str() {
            "implicit_bdf2" | "implicit" => Scheme::ImplicitBdf2,
            "semi_explicit_bdf2" | "semi_explicit" => Scheme::SemiExplicitBdf2,
            "fixed_stress_bdf2" | "fixed_stress" => Scheme::FixedStressBdf2,
            "naive_iterative" | "naive" => Scheme::NaiveIterative,
            "novel_iterative" | "novel" => Scheme::NovelIterative,
            "increment_splitting" | "increment" => Scheme::IncrementSplitting,
            "midpoint" => Scheme::Midpoint,
            _ => {
                return Err(Error::Config(format!(
                    "unknown scheme '{s}' (expected one of: {})",
                    Scheme::ALL.map(|s| s.name()).join(", ")
                )))
            }
        })
    }
}

/// How the second starting value `(u¹, p¹)` is obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// Implicit Euler over `[0, τ]` split into `substeps` equal steps.
    ImplicitEuler { substeps: usize },
    /// Caller-provided state at `t = τ`.
    Exact(State),
}

impl Default for Init {
    fn default() -> Self {
        Init::ImplicitEuler { substeps: 1 }
    }
}

/// Default divergence factor: a run diverges once `‖u‖_A + ‖p‖_C` exceeds
/// this multiple of `1 + ` its initial value.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

/// Scheme selector and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    /// Inner iterations per step (`≥ 1`).
    pub k: usize,
    /// Relaxation factor; `None` means `2/(2+ω)` with `ω` at `τ = 0`.
    pub gamma: Option<f64>,
    /// Fixed-stress stabilization; `None` means `C_D²/(2 c_A)`.
    pub l: Option<f64>,
    /// Fixed-stress tolerance; `None` means `τ³`.
    pub tol: Option<f64>,
    /// Fixed-stress iteration cap.
    pub max_inner: usize,
    pub init: Init,
    pub divergence_factor: f64,
}

impl SchemeConfig {
    pub fn new(scheme: Scheme) -> Self {
        Self {
            scheme,
            k: 1,
            gamma: None,
            l: None,
            tol: None,
            max_inner: 1000,
            init: Init::default(),
            divergence_factor: DIVERGENCE_FACTOR,
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = Some(gamma);
        self
    }

    pub fn with_l(mut self, l: f64) -> Self {
        self.l = Some(l);
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = Some(tol);
        self
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("K must be >= 1".into()));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g <= 1.0) {
                return Err(Error::InvalidParameter(format!("gamma must lie in (0, 1], got {g}")));
            }
        }
        if let Some(l) = self.l {
            if !(l >= 0.0) || !l.is_finite() {
                return Err(Error::InvalidParameter(format!("L must be >= 0, got {l}")));
            }
        }
        if let Some(t) = self.tol {
            if !(t > 0.0) {
                return Err(Error::InvalidParameter(format!("TOL must be > 0, got {t}")));
            }
        }
        if self.max_inner == 0 {
            return Err(Error::InvalidParameter("iteration cap must be >= 1".into()));
        }
        if let Init::ImplicitEuler { substeps: 0 } = self.init {
            return Err(Error::InvalidParameter("implicit Euler needs >= 1 substep".into()));
        }
        if !(self.divergence_factor > 0.0) {
            return Err(Error::InvalidParameter("divergence factor must be > 0".into()));
        }
        Ok(())
    }

    /// `γ`, defaulting to `2/(2+ω(0))`.
    pub fn resolve_gamma(&self, sys: &PoroSystem) -> Result<f64> {
        match self.gamma {
            Some(g) => Ok(g),
            None => relaxation_gamma(coupling_strength(sys, 0.0)?),
        }
    }

    /// `L`, defaulting to `C_D²/(2 c_A)`.
    pub fn resolve_l(&self, sys: &PoroSystem) -> f64 {
        self.l.unwrap_or_else(|| {
            let k = sys.constants();
            k.big_c_d * k.big_c_d / (2.0 * k.c_a)
        })
    }

    pub fn resolve_tol(&self, tau: f64) -> f64 {
        self.tol.unwrap_or(tau * tau * tau)
    }
}

/// `‖A u − Dᵀ p − f(t)‖₂ / max(1, ‖f(t)‖₂)`.
pub fn check_consistency(sys: &PoroSystem, s: &State) -> f64 {
    let f = sys.f().eval(s.t);
    let r = sys.a() * &s.u - sys.d().transpose() * &s.p - &f;
    r.norm() / f.norm().max(1.0)
}

/// Solves `B p = g(t)`, then `A u = f(t) + Dᵀ p`.
pub fn solve_static(sys: &PoroSystem, t: f64) -> Result<State> {
    let g = sys.g().eval(t);
    let p = if g.iter().all(|&v| v == 0.0) {
        Vector::zeros(sys.n_p())
    } else {
        SpdSolver::named(sys.b(), sys.solver_options(), "B")?.solve(&g)?
    };
    let u = sys.a_solver().solve(&(sys.f().eval(t) + sys.d().transpose() * &p))?;
    Ok(State::new(t, u, p))
}

/// The state at time `t` with pressure `p` and the displacement that makes it
/// consistent: `u = A⁻¹(f(t) + Dᵀ p)`.
pub fn consistent_state(sys: &PoroSystem, t: f64, p: Vector) -> Result<State> {
    if p.len() != sys.n_p() {
        return Err(Error::DimensionMismatch {
            context: "pressure of a consistent state",
            expected: sys.n_p(),
            found: p.len(),
        });
    }
    let u = sys.a_solver().solve(&(sys.f().eval(t) + sys.d().transpose() * &p))?;
    Ok(State::new(t, u, p))
}
