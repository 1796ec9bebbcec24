//! Time-stepping schemes for the poroelastic system.
//!
//! Every two-step method advances `(uⁿ, pⁿ), (uⁿ⁺¹, pⁿ⁺¹) ↦ (uⁿ⁺², pⁿ⁺²)`
//! through a [`StepWorkspace`] that owns the factorizations for one step size.

mod trajectory;

use std::cell::OnceCell;

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, DenseMatrix, SpdSolver, Vector};
use crate::system::{assemble_ctau, PoroSystem, Scheme, SchemeConfig, State};

pub use trajectory::{
    integrate, integrate_with, read_binary_states, Trajectory, TRAJECTORY_MAGIC, TRAJECTORY_VERSION,
};

/// Work done by one step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepInfo {
    /// Solves with `A`, `Cτ` or the fixed-stress matrix.
    pub spd_solves: usize,
    /// Solves of a coupled block system.
    pub coupled_solves: usize,
    pub inner_iterations: usize,
    /// Relative residual of the step's defining coupled equations at the new
    /// state; zero for the implicit solves up to rounding.
    pub residual: f64,
}

/// Sparse copies of the system matrices used for products.
#[derive(Debug, Clone)]
struct SparseOps {
    a: CsrMatrix,
    b: CsrMatrix,
    c: CsrMatrix,
    d: CsrMatrix,
    dt: CsrMatrix,
    ctau: CsrMatrix,
}

fn mul(m: &CsrMatrix, x: &Vector) -> Vector {
    let mut y = Vector::zeros(m.rows());
    m.mul_vec_into(x.as_slice(), y.as_mut_slice());
    y
}

fn energy_sq(m: &CsrMatrix, x: &Vector) -> f64 {
    x.dot(&mul(m, x)).max(0.0)
}

/// Solver for the saddle-point system
///
/// ```text
///   [ A  −Dᵀ ] [u]   [r_u]
///   [ D   M  ] [p] = [r_p]
/// ```
///
/// by the Schur complement `M + D A⁻¹ Dᵀ` (symmetric positive definite).
#[derive(Debug, Clone)]
pub struct CoupledSolver {
    schur: SpdSolver,
    d: CsrMatrix,
    dt: CsrMatrix,
}

impl CoupledSolver {
    /// `a_inv_dt` is `A⁻¹ Dᵀ`.
    pub fn new(sys: &PoroSystem, m: &DenseMatrix, a_inv_dt: &DenseMatrix) -> Result<Self> {
        let s = m + sys.d() * a_inv_dt;
        let s = (&s + s.transpose()) * 0.5;
        Ok(Self {
            schur: SpdSolver::named(&s, sys.solver_options(), "Schur complement")?,
            d: CsrMatrix::from_dense(sys.d()),
            dt: CsrMatrix::from_dense(&sys.d().transpose()),
        })
    }

    pub fn solve(&self, sys: &PoroSystem, r_u: &Vector, r_p: &Vector) -> Result<(Vector, Vector)> {
        let a = sys.a_solver();
        let y = a.solve(r_u)?;
        let p = self.schur.solve(&(r_p - mul(&self.d, &y)))?;
        let u = a.solve(&(r_u + mul(&self.dt, &p)))?;
        Ok((u, p))
    }
}

/// Factorizations and sparse operators for one `(system, τ)` pair, reused by
/// every step and inner iteration.
#[derive(Debug)]
pub struct StepWorkspace<'s> {
    sys: &'s PoroSystem,
    tau: f64,
    ops: SparseOps,
    ctau_solver: SpdSolver,
    a_inv_dt: OnceCell<DenseMatrix>,
    bdf2: OnceCell<CoupledSolver>,
    midpoint: OnceCell<CoupledSolver>,
    fixed_stress: OnceCell<(f64, SpdSolver)>,
}

fn cached<'c, T>(cell: &'c OnceCell<T>, build: impl FnOnce() -> Result<T>) -> Result<&'c T> {
    if let Some(v) = cell.get() {
        return Ok(v);
    }
    let v = build()?;
    Ok(cell.get_or_init(|| v))
}

impl<'s> StepWorkspace<'s> {
    pub fn new(sys: &'s PoroSystem, tau: f64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidParameter(format!("step size must be > 0, got {tau}")));
        }
        let ctau = assemble_ctau(sys, tau);
        let ctau_solver = SpdSolver::named(&ctau, sys.solver_options(), "C_tau")?;
        let ops = SparseOps {
            a: CsrMatrix::from_dense(sys.a()),
            b: CsrMatrix::from_dense(sys.b()),
            c: CsrMatrix::from_dense(sys.c()),
            d: CsrMatrix::from_dense(sys.d()),
            dt: CsrMatrix::from_dense(&sys.d().transpose()),
            ctau: CsrMatrix::from_dense(&ctau),
        };
        Ok(Self {
            sys,
            tau,
            ops,
            ctau_solver,
            a_inv_dt: OnceCell::new(),
            bdf2: OnceCell::new(),
            midpoint: OnceCell::new(),
            fixed_stress: OnceCell::new(),
        })
    }

    pub fn system(&self) -> &'s PoroSystem {
        self.sys
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Builds the factorizations `cfg.scheme` needs so that stepping does
    /// no setup work.
    pub fn prepare(&self, cfg: &SchemeConfig) -> Result<()> {
        match cfg.scheme {
            Scheme::ImplicitBdf2 => self.bdf2_solver().map(|_| ()),
            Scheme::Midpoint => self.midpoint_solver().map(|_| ()),
            Scheme::FixedStressBdf2 => self.fixed_stress_solver(cfg.resolve_l(self.sys)).map(|_| ()),
            _ => Ok(()),
        }
    }

    fn a_inv_dt(&self) -> Result<&DenseMatrix> {
        cached(&self.a_inv_dt, || {
            self.sys.a_solver().solve_columns(&self.sys.d().transpose())
        })
    }

    /// Coupled solver for the one-step system with flow matrix `C + h·B`.
    pub fn euler_solver(&self, h: f64) -> Result<CoupledSolver> {
        CoupledSolver::new(self.sys, &(self.sys.c() + self.sys.b() * h), self.a_inv_dt()?)
    }

    fn bdf2_solver(&self) -> Result<&CoupledSolver> {
        cached(&self.bdf2, || {
            CoupledSolver::new(self.sys, &assemble_ctau(self.sys, self.tau), self.a_inv_dt()?)
        })
    }

    fn midpoint_solver(&self) -> Result<&CoupledSolver> {
        cached(&self.midpoint, || {
            CoupledSolver::new(
                self.sys,
                &(self.sys.c() + self.sys.b() * (0.5 * self.tau)),
                self.a_inv_dt()?,
            )
        })
    }

    /// Solver for `Cτ + L·I`; rebuilt when called with a different `L`.
    fn fixed_stress_solver(&self, l: f64) -> Result<std::borrow::Cow<'_, SpdSolver>> {
        let build = || {
            let n = self.sys.n_p();
            let m = assemble_ctau(self.sys, self.tau) + DenseMatrix::identity(n, n) * l;
            SpdSolver::named(&m, self.sys.solver_options(), "C_tau + L I")
        };
        let (cached_l, solver) = cached(&self.fixed_stress, || Ok((l, build()?)))?;
        if *cached_l == l {
            Ok(std::borrow::Cow::Borrowed(solver))
        } else {
            Ok(std::borrow::Cow::Owned(build()?))
        }
    }

    /// Solves `3Cτ p = r`.
    fn solve_3ctau(&self, r: &Vector) -> Result<Vector> {
        self.ctau_solver.solve(&(r / 3.0))
    }

    /// `2τ gⁿ⁺² + D(4uⁿ⁺¹ − uⁿ) + C(4pⁿ⁺¹ − pⁿ)`.
    fn bdf2_flow_rhs(&self, s0: &State, s1: &State, t2: f64) -> Vector {
        let g = self.sys.g().eval(t2);
        let du = &s1.u * 4.0 - &s0.u;
        let dp = &s1.p * 4.0 - &s0.p;
        g * (2.0 * self.tau) + mul(&self.ops.d, &du) + mul(&self.ops.c, &dp)
    }

    /// Relative residual of the implicit BDF-2 equations at `(u, p)`.
    fn bdf2_residual(&self, f: &Vector, r2: &Vector, u: &Vector, p: &Vector) -> f64 {
        let r_u = f - mul(&self.ops.a, u) + mul(&self.ops.dt, p);
        let r_p = r2 - (mul(&self.ops.d, u) + mul(&self.ops.ctau, p)) * 3.0;
        let scale = (f.norm_squared() + r2.norm_squared()).sqrt().max(1.0);
        (r_u.norm_squared() + r_p.norm_squared()).sqrt() / scale
    }

    fn check_pair(&self, s0: &State, s1: &State) -> Result<()> {
        for s in [s0, s1] {
            if s.u.len() != self.sys.n_u() || s.p.len() != self.sys.n_p() {
                return Err(Error::DimensionMismatch {
                    context: "state passed to a step",
                    expected: self.sys.n_u() + self.sys.n_p(),
                    found: s.u.len() + s.p.len(),
                });
            }
        }
        Ok(())
    }
}

/// One implicit Euler step of size `h` from `s`.
///
/// Solves `A u¹ − Dᵀp¹ = f(t+h)` and `D(u¹−u⁰) + C(p¹−p⁰) + h B p¹ = h g(t+h)`.
pub fn implicit_euler_step_with(
    sys: &PoroSystem,
    solver: &CoupledSolver,
    h: f64,
    s: &State,
) -> Result<State> {
    let t = s.t + h;
    let r_u = sys.f().eval(t);
    let r_p = sys.g().eval(t) * h + sys.d() * &s.u + sys.c() * &s.p;
    let (u, p) = solver.solve(sys, &r_u, &r_p)?;
    Ok(State::new(t, u, p))
}

/// One implicit Euler step of size `tau` (builds its own factorizations).
pub fn implicit_euler_step(sys: &PoroSystem, tau: f64, s: &State) -> Result<State> {
    let ws = StepWorkspace::new(sys, tau)?;
    let solver = ws.euler_solver(tau)?;
    implicit_euler_step_with(sys, &solver, tau, s)
}

/// Implicit BDF-2: one coupled solve.
pub fn bdf2_implicit_step(ws: &StepWorkspace, s0: &State, s1: &State) -> Result<(State, StepInfo)> {
    ws.check_pair(s0, s1)?;
    let t2 = s1.t + ws.tau;
    let f = ws.sys.f().eval(t2);
    let r2 = ws.bdf2_flow_rhs(s0, s1, t2);
    let (u, p) = ws.bdf2_solver()?.solve(ws.sys, &f, &(&r2 / 3.0))?;
    let residual = ws.bdf2_residual(&f, &r2, &u, &p);
    Ok((
        State::new(t2, u, p),
        StepInfo {
            spd_solves: 0,
            coupled_solves: 1,
            inner_iterations: 1,
            residual,
        },
    ))
}

/// Semi-explicit BDF-2: `A u = f + Dᵀ(2pⁿ⁺¹ − pⁿ)`, then the flow equation.
pub fn bdf2_semi_explicit_step(
    ws: &StepWorkspace,
    s0: &State,
    s1: &State,
) -> Result<(State, StepInfo)> {
    ws.check_pair(s0, s1)?;
    let t2 = s1.t + ws.tau;
    let f = ws.sys.f().eval(t2);
    let r2 = ws.bdf2_flow_rhs(s0, s1, t2);
    let p_ext = &s1.p * 2.0 - &s0.p;
    let u = ws.sys.a_solver().solve(&(&f + mul(&ws.ops.dt, &p_ext)))?;
    let p = ws.solve_3ctau(&(&r2 - mul(&ws.ops.d, &u) * 3.0))?;
    let residual = ws.bdf2_residual(&f, &r2, &u, &p);
    Ok((
        State::new(t2, u, p),
        StepInfo {
            spd_solves: 2,
            coupled_solves: 0,
            inner_iterations: 1,
            residual,
        },
    ))
}

/// Second-order fixed stress. Each sweep solves the flow equation with the
/// lagged displacement,
/// `(3Cτ + 3L·I) p_{k+1} = 2τgⁿ⁺² + D(4uⁿ⁺¹−uⁿ) + C(4pⁿ⁺¹−pⁿ) − 3D u_k + 3L p_k`,
/// then `A u_{k+1} = fⁿ⁺² + Dᵀ p_{k+1}`, and stops once
/// `‖u_{k+1}−u_k‖²_A + ‖p_{k+1}−p_k‖²_C ≤ TOL²`. Starts from `(uⁿ⁺¹, pⁿ⁺¹)`.
pub fn fixed_stress_bdf2_step(
    ws: &StepWorkspace,
    s0: &State,
    s1: &State,
    l: f64,
    tol: f64,
    k_max: usize,
) -> Result<(State, StepInfo)> {
    ws.check_pair(s0, s1)?;
    if !(l >= 0.0) || !(tol > 0.0) || k_max == 0 {
        return Err(Error::InvalidParameter(format!(
            "fixed stress needs L >= 0, TOL > 0, k_max >= 1 (got {l}, {tol}, {k_max})"
        )));
    }
    let t2 = s1.t + ws.tau;
    let f = ws.sys.f().eval(t2);
    let r2 = ws.bdf2_flow_rhs(s0, s1, t2);
    let solver = ws.fixed_stress_solver(l)?;
    let mut u = s1.u.clone();
    let mut p = s1.p.clone();
    let mut increment = f64::INFINITY;
    for k in 1..=k_max {
        let rhs = (&r2 - mul(&ws.ops.d, &u) * 3.0) / 3.0 + &p * l;
        let p_next = solver.solve(&rhs)?;
        let u_next = ws.sys.a_solver().solve(&(&f + mul(&ws.ops.dt, &p_next)))?;
        increment = (energy_sq(&ws.ops.a, &(&u_next - &u)) + energy_sq(&ws.ops.c, &(&p_next - &p))).sqrt();
        u = u_next;
        p = p_next;
        if !increment.is_finite() {
            return Err(Error::NonFinite("fixed-stress iteration"));
        }
        if increment <= tol {
            let residual = ws.bdf2_residual(&f, &r2, &u, &p);
            return Ok((
                State::new(t2, u, p),
                StepInfo {
                    spd_solves: 2 * k,
                    coupled_solves: 0,
                    inner_iterations: k,
                    residual,
                },
            ));
        }
    }
    Err(Error::NoConvergence {
        what: "fixed-stress iteration",
        iterations: k_max,
        residual: increment,
    })
}

/// Unrelaxed splitting of implicit BDF-2 started from `(uⁿ⁺¹, pⁿ⁺¹)`.
pub fn naive_iterative_step(
    ws: &StepWorkspace,
    s0: &State,
    s1: &State,
    k: usize,
) -> Result<(State, StepInfo)> {
    ws.check_pair(s0, s1)?;
    if k == 0 {
        return Err(Error::InvalidParameter("K must be >= 1".into()));
    }
    let t2 = s1.t + ws.tau;
    let f = ws.sys.f().eval(t2);
    let r2 = ws.bdf2_flow_rhs(s0, s1, t2);
    let mut u = s1.u.clone();
    let mut p = s1.p.clone();
    for _ in 0..k {
        u = ws.sys.a_solver().solve(&(&f + mul(&ws.ops.dt, &p)))?;
        p = ws.solve_3ctau(&(&r2 - mul(&ws.ops.d, &u) * 3.0))?;
    }
    let residual = ws.bdf2_residual(&f, &r2, &u, &p);
    Ok((
        State::new(t2, u, p),
        StepInfo {
            spd_solves: 2 * k,
            coupled_solves: 0,
            inner_iterations: k,
            residual,
        },
    ))
}

/// Inner iterates of one step of the relaxed scheme.
#[derive(Debug, Clone)]
pub struct NovelTrace {
    /// `û_1 … û_K`.
    pub u_hat: Vec<Vector>,
    /// `p_0 … p_{K−1}`: the extrapolated start and the relaxed iterates.
    pub p_relaxed: Vec<Vector>,
    pub state: State,
    pub info: StepInfo,
}

fn check_k_gamma(k: usize, gamma: f64) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidParameter("K must be >= 1".into()));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidParameter(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    Ok(())
}

fn novel_impl(
    ws: &StepWorkspace,
    s0: &State,
    s1: &State,
    k: usize,
    gamma: f64,
    trace: bool,
) -> Result<NovelTrace> {
    ws.check_pair(s0, s1)?;
    check_k_gamma(k, gamma)?;
    let t2 = s1.t + ws.tau;
    let f = ws.sys.f().eval(t2);
    let r2 = ws.bdf2_flow_rhs(s0, s1, t2);
    // The extrapolated displacement 2uⁿ⁺¹ − uⁿ never enters a sweep.
    let mut p = &s1.p * 2.0 - &s0.p;
    let mut u_hat_all = Vec::new();
    let mut p_all = Vec::new();
    let mut result = None;
    for sweep in 0..k {
        if trace {
            p_all.push(p.clone());
        }
        let u_hat = ws.sys.a_solver().solve(&(&f + mul(&ws.ops.dt, &p)))?;
        let p_hat = ws.solve_3ctau(&(&r2 - mul(&ws.ops.d, &u_hat) * 3.0))?;
        if trace {
            u_hat_all.push(u_hat.clone());
        }
        if sweep + 1 < k {
            p = p_hat * gamma + &p * (1.0 - gamma);
        } else {
            result = Some((u_hat, p_hat));
        }
    }
    let (u, p) = result.expect("K >= 1 sweeps");
    let residual = ws.bdf2_residual(&f, &r2, &u, &p);
    Ok(NovelTrace {
        u_hat: u_hat_all,
        p_relaxed: p_all,
        state: State::new(t2, u, p),
        info: StepInfo {
            spd_solves: 2 * k,
            coupled_solves: 0,
            inner_iterations: k,
            residual,
        },
    })
}

/// The relaxed iterative BDF-2 step: extrapolated start `2pⁿ⁺¹ − pⁿ`, `K`
/// decoupled sweeps, pressure damping with `γ` after every sweep but the last.
pub fn novel_scheme_step(
    ws: &StepWorkspace,
    s0: &State,
    s1: &State,
    k: usize,
    gamma: f64,
) -> Result<(State, StepInfo)> {
    let t = novel_impl(ws, s0, s1, k, gamma, false)?;
    Ok((t.state, t.info))
}

/// As [`novel_scheme_step`], also returning every inner iterate.
pub fn novel_scheme_sweeps(
    ws: &StepWorkspace,
    s0: &State,
    s1: &State,
    k: usize,
    gamma: f64,
) -> Result<NovelTrace> {
    novel_impl(ws, s0, s1, k, gamma, true)
}

/// The same iteration written for the increments `δ = x − xⁿ⁺¹`, started from
/// `δ_0 = xⁿ⁺¹ − xⁿ`.
pub fn increment_scheme_step(
    ws: &StepWorkspace,
    s0: &State,
    s1: &State,
    k: usize,
    gamma: f64,
) -> Result<(State, StepInfo)> {
    ws.check_pair(s0, s1)?;
    check_k_gamma(k, gamma)?;
    let tau = ws.tau;
    let t2 = s1.t + tau;
    let f = ws.sys.f().eval(t2);
    let g = ws.sys.g().eval(t2);
    let rhs_u = &f - mul(&ws.ops.a, &s1.u) + mul(&ws.ops.dt, &s1.p);
    let rhs_p = g * (2.0 * tau) - mul(&ws.ops.b, &s1.p) * (2.0 * tau)
        + mul(&ws.ops.d, &(&s1.u - &s0.u))
        + mul(&ws.ops.c, &(&s1.p - &s0.p));
    let mut dp = &s1.p - &s0.p;
    let mut result = None;
    for sweep in 0..k {
        let du_hat = ws.sys.a_solver().solve(&(mul(&ws.ops.dt, &dp) + &rhs_u))?;
        let dp_hat = ws.solve_3ctau(&(&rhs_p - mul(&ws.ops.d, &du_hat) * 3.0))?;
        if sweep + 1 < k {
            dp = dp_hat * gamma + &dp * (1.0 - gamma);
        } else {
            result = Some((du_hat, dp_hat));
        }
    }
    let (du, dp) = result.expect("K >= 1 sweeps");
    let u = &s1.u + du;
    let p = &s1.p + dp;
    let r2 = ws.bdf2_flow_rhs(s0, s1, t2);
    let residual = ws.bdf2_residual(&f, &r2, &u, &p);
    Ok((
        State::new(t2, u, p),
        StepInfo {
            spd_solves: 2 * k,
            coupled_solves: 0,
            inner_iterations: k,
            residual,
        },
    ))
}

/// Reference one-step method: the constraint is enforced at the new node and
/// the flow equation uses the trapezoidal rule with the load at the midpoint,
/// `D(u¹−u⁰) + C(p¹−p⁰) + τB(p¹+p⁰)/2 = τ g(t+τ/2)`.
pub fn midpoint_reference_step(ws: &StepWorkspace, s: &State) -> Result<(State, StepInfo)> {
    ws.check_pair(s, s)?;
    let tau = ws.tau;
    let t = s.t + tau;
    let r_u = ws.sys.f().eval(t);
    let r_p = ws.sys.g().eval(s.t + 0.5 * tau) * tau + mul(&ws.ops.d, &s.u) + mul(&ws.ops.c, &s.p)
        - mul(&ws.ops.b, &s.p) * (0.5 * tau);
    let (u, p) = ws.midpoint_solver()?.solve(ws.sys, &r_u, &r_p)?;
    let res_u = &r_u - mul(&ws.ops.a, &u) + mul(&ws.ops.dt, &p);
    let res_p = &r_p - mul(&ws.ops.d, &u) - mul(&ws.ops.c, &p) - mul(&ws.ops.b, &p) * (0.5 * tau);
    let scale = (r_u.norm_squared() + r_p.norm_squared()).sqrt().max(1.0);
    let residual = (res_u.norm_squared() + res_p.norm_squared()).sqrt() / scale;
    Ok((
        State::new(t, u, p),
        StepInfo {
            spd_solves: 0,
            coupled_solves: 1,
            inner_iterations: 1,
            residual,
        },
    ))
}
