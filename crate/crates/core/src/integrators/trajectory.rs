use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::integrators::{
    bdf2_implicit_step, bdf2_semi_explicit_step, fixed_stress_bdf2_step, implicit_euler_step_with,
    increment_scheme_step, midpoint_reference_step, naive_iterative_step, novel_scheme_step,
    StepInfo, StepWorkspace,
};
use crate::linalg::{weighted_norm_sq, Vector};
use crate::system::{check_consistency, Init, PoroSystem, Scheme, SchemeConfig, State, TimeGrid};

/// Magic bytes opening a binary trajectory dump.
pub const TRAJECTORY_MAGIC: [u8; 4] = *b"PTRJ";
pub const TRAJECTORY_VERSION: u32 = 1;

/// Largest admissible consistency residual of the initial state.
const INITIAL_CONSISTENCY: f64 = 1e-8;

/// Discrete solution on a time grid.
///
/// `states[n]` is the state at `tⁿ` and `info[n]` the work that produced it
/// (`info[0]` is empty). A divergent run stops early, so `states` may be
/// shorter than `N + 1`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub scheme: Scheme,
    pub states: Vec<State>,
    pub info: Vec<StepInfo>,
    pub diverged: bool,
    /// Largest `‖u‖_A + ‖p‖_C` over the stored states.
    pub max_norm: f64,
    /// `‖u⁰‖_A + ‖p⁰‖_C`.
    pub initial_norm: f64,
    /// Wall-clock seconds spent in the stepping loop, excluding setup and
    /// the computation of the starting values.
    pub stepping_seconds: f64,
}

impl Trajectory {
    pub fn is_complete(&self) -> bool {
        self.states.len() == self.grid.steps() + 1
    }

    pub fn last(&self) -> &State {
        self.states.last().expect("a trajectory holds the initial state")
    }

    /// Work summed over the two-step updates `n ≥ 2` (initialization excluded).
    pub fn update_work(&self) -> StepInfo {
        self.info.iter().skip(2).fold(StepInfo::default(), |acc, i| StepInfo {
            spd_solves: acc.spd_solves + i.spd_solves,
            coupled_solves: acc.coupled_solves + i.coupled_solves,
            inner_iterations: acc.inner_iterations + i.inner_iterations,
            residual: acc.residual.max(i.residual),
        })
    }

    /// Number of two-step updates performed.
    pub fn update_count(&self) -> usize {
        self.states.len().saturating_sub(2)
    }

    /// CSV with columns `t, norm_u_A, norm_p_C, inner_iterations, residual`.
    pub fn to_csv(&self, sys: &PoroSystem) -> String {
        let mut out = String::from("t,norm_u_A,norm_p_C,inner_iterations,residual\n");
        for (s, i) in self.states.iter().zip(&self.info) {
            out.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{},{:.17e}\n",
                s.t,
                weighted_norm_sq(&s.u, sys.a()).sqrt(),
                weighted_norm_sq(&s.p, sys.c()).sqrt(),
                i.inner_iterations,
                i.residual
            ));
        }
        out
    }

    /// Binary dump, all fields little-endian:
    ///
    /// ```text
    /// magic  [u8; 4] = "PTRJ"
    /// version u32    = 1
    /// n_u     u64
    /// n_p     u64
    /// count   u64      number of states
    /// tau     f64
    /// count × { t f64, u [f64; n_u], p [f64; n_p] }
    /// ```
    pub fn write_binary(&self, mut w: impl Write) -> std::io::Result<()> {
        let (n_u, n_p) = self
            .states
            .first()
            .map_or((0, 0), |s| (s.u.len(), s.p.len()));
        w.write_all(&TRAJECTORY_MAGIC)?;
        w.write_all(&TRAJECTORY_VERSION.to_le_bytes())?;
        for n in [n_u, n_p, self.states.len()] {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        w.write_all(&self.grid.tau().to_le_bytes())?;
        for s in &self.states {
            w.write_all(&s.t.to_le_bytes())?;
            for v in s.u.iter().chain(s.p.iter()) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn save_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_binary(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }
}

/// Reads the states and step size of a binary dump written by
/// [`Trajectory::write_binary`].
pub fn read_binary_states(mut r: impl Read) -> std::io::Result<(f64, Vec<State>)> {
    let bad = |m: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, m.to_owned());
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != TRAJECTORY_MAGIC {
        return Err(bad("not a trajectory dump"));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    if u32::from_le_bytes(b4) != TRAJECTORY_VERSION {
        return Err(bad("unsupported trajectory dump version"));
    }
    let mut b8 = [0u8; 8];
    let mut next_u64 = |r: &mut dyn Read| -> std::io::Result<u64> {
        r.read_exact(&mut b8)?;
        Ok(u64::from_le_bytes(b8))
    };
    let n_u = next_u64(&mut r)? as usize;
    let n_p = next_u64(&mut r)? as usize;
    let count = next_u64(&mut r)? as usize;
    let tau = f64::from_bits(next_u64(&mut r)?);
    let read_f64 = |r: &mut dyn Read| -> std::io::Result<f64> {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    };
    let mut states = Vec::with_capacity(count);
    for _ in 0..count {
        let t = read_f64(&mut r)?;
        let u = (0..n_u).map(|_| read_f64(&mut r)).collect::<std::io::Result<Vec<_>>>()?;
        let p = (0..n_p).map(|_| read_f64(&mut r)).collect::<std::io::Result<Vec<_>>>()?;
        states.push(State::new(t, Vector::from_vec(u), Vector::from_vec(p)));
    }
    Ok((tau, states))
}

/// Advances `initial` over `grid` with the configured scheme.
///
/// Two-step schemes obtain `(u¹, p¹)` per `cfg.init`. The run stops early and
/// sets `diverged` once `‖u‖_A + ‖p‖_C` exceeds
/// `cfg.divergence_factor · (1 + ‖u⁰‖_A + ‖p⁰‖_C)` or a state is not finite.
pub fn integrate(
    sys: &PoroSystem,
    grid: &TimeGrid,
    cfg: &SchemeConfig,
    initial: &State,
) -> Result<Trajectory> {
    cfg.validate()?;
    let residual = check_consistency(sys, initial);
    if !(residual <= INITIAL_CONSISTENCY) {
        return Err(Error::Inconsistent {
            residual,
            tolerance: INITIAL_CONSISTENCY,
        });
    }
    let ws = StepWorkspace::new(sys, grid.tau())?;
    integrate_with(&ws, grid, cfg, initial)
}

/// As [`integrate`] with a caller-owned workspace (built for `grid.tau()`).
pub fn integrate_with(
    ws: &StepWorkspace,
    grid: &TimeGrid,
    cfg: &SchemeConfig,
    initial: &State,
) -> Result<Trajectory> {
    cfg.validate()?;
    let sys = ws.system();
    if (ws.tau() - grid.tau()).abs() > 1e-15 * grid.tau() {
        return Err(Error::InvalidParameter("workspace built for a different step size".into()));
    }
    ws.prepare(cfg)?;
    let tau = grid.tau();
    let initial_norm = sys.energy_norm(initial);
    let limit = cfg.divergence_factor * (1.0 + initial_norm);
    let gamma = if matches!(cfg.scheme, Scheme::NovelIterative | Scheme::IncrementSplitting) {
        cfg.resolve_gamma(sys)?
    } else {
        1.0
    };
    let l = cfg.resolve_l(sys);
    let tol = cfg.resolve_tol(tau);

    let mut traj = Trajectory {
        grid: *grid,
        scheme: cfg.scheme,
        states: Vec::with_capacity(grid.steps() + 1),
        info: Vec::with_capacity(grid.steps() + 1),
        diverged: false,
        max_norm: initial_norm,
        initial_norm,
        stepping_seconds: 0.0,
    };
    let mut initial = initial.clone();
    initial.t = 0.0;
    traj.states.push(initial);
    traj.info.push(StepInfo::default());

    let accept = |traj: &mut Trajectory, s: State, info: StepInfo| -> bool {
        let norm = sys.energy_norm(&s);
        let ok = s.is_finite() && norm.is_finite() && norm <= limit;
        traj.max_norm = traj.max_norm.max(if norm.is_finite() { norm } else { f64::INFINITY });
        traj.states.push(s);
        traj.info.push(info);
        if !ok {
            traj.diverged = true;
        }
        ok
    };

    if cfg.scheme == Scheme::Midpoint {
        let start = Instant::now();
        for n in 1..=grid.steps() {
            let (mut s, info) = midpoint_reference_step(ws, &traj.states[n - 1])?;
            s.t = grid.node(n);
            if !accept(&mut traj, s, info) {
                break;
            }
        }
        traj.stepping_seconds = start.elapsed().as_secs_f64();
        return Ok(traj);
    }

    let (s1, info1) = match &cfg.init {
        Init::ImplicitEuler { substeps } => {
            let h = tau / *substeps as f64;
            let solver = ws.euler_solver(h)?;
            let mut s = traj.states[0].clone();
            for _ in 0..*substeps {
                s = implicit_euler_step_with(sys, &solver, h, &s)?;
            }
            s.t = grid.node(1);
            let info = StepInfo {
                spd_solves: 0,
                coupled_solves: *substeps,
                inner_iterations: *substeps,
                residual: 0.0,
            };
            (s, info)
        }
        Init::Exact(s) => {
            if s.u.len() != sys.n_u() || s.p.len() != sys.n_p() {
                return Err(Error::DimensionMismatch {
                    context: "provided starting state",
                    expected: sys.n_u() + sys.n_p(),
                    found: s.u.len() + s.p.len(),
                });
            }
            let mut s = s.clone();
            s.t = grid.node(1);
            (s, StepInfo::default())
        }
    };
    if !accept(&mut traj, s1, info1) {
        return Ok(traj);
    }

    let start = Instant::now();
    for n in 2..=grid.steps() {
        let (s0, s1) = (&traj.states[n - 2], &traj.states[n - 1]);
        let (mut s, info) = match cfg.scheme {
            Scheme::ImplicitBdf2 => bdf2_implicit_step(ws, s0, s1)?,
            Scheme::SemiExplicitBdf2 => bdf2_semi_explicit_step(ws, s0, s1)?,
            Scheme::FixedStressBdf2 => fixed_stress_bdf2_step(ws, s0, s1, l, tol, cfg.max_inner)?,
            Scheme::NaiveIterative => naive_iterative_step(ws, s0, s1, cfg.k)?,
            Scheme::NovelIterative => novel_scheme_step(ws, s0, s1, cfg.k, gamma)?,
            Scheme::IncrementSplitting => increment_scheme_step(ws, s0, s1, cfg.k, gamma)?,
            Scheme::Midpoint => unreachable!("handled above"),
        };
        s.t = grid.node(n);
        if !accept(&mut traj, s, info) {
            break;
        }
    }
    traj.stepping_seconds = start.elapsed().as_secs_f64();
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;
    use crate::system::Forcing;

    fn small() -> PoroSystem {
        PoroSystem::new(
            DenseMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]),
            DenseMatrix::identity(1, 1),
            DenseMatrix::identity(1, 1),
            DenseMatrix::from_row_slice(1, 2, &[0.3, 0.2]),
            Forcing::Zero(2),
            Forcing::Sine(Vector::from_element(1, 1.0)),
        )
        .unwrap()
    }

    #[test]
    fn zero_data_two_steps() {
        let sys = small().with_rhs(Forcing::Zero(2), Forcing::Zero(1)).unwrap();
        let grid = TimeGrid::new(0.5, 2).unwrap();
        for scheme in Scheme::ALL {
            let t = integrate(&sys, &grid, &SchemeConfig::new(scheme), &State::zeros(0.0, 2, 1)).unwrap();
            assert_eq!(t.states.len(), 3);
            assert!(t.states.iter().all(|s| s.u.iter().chain(s.p.iter()).all(|&v| v == 0.0)));
            assert!(!t.diverged);
        }
    }

    #[test]
    fn rejects_inconsistent_start() {
        let sys = small();
        let grid = TimeGrid::new(0.5, 2).unwrap();
        let s = State::new(0.0, Vector::from_element(2, 1.0), Vector::zeros(1));
        let err = integrate(&sys, &grid, &SchemeConfig::new(Scheme::ImplicitBdf2), &s).unwrap_err();
        assert!(matches!(err, Error::Inconsistent { .. }));
    }

    #[test]
    fn binary_dump_round_trip() {
        let sys = small();
        let grid = TimeGrid::uniform(1.0, 8).unwrap();
        let t = integrate(&sys, &grid, &SchemeConfig::new(Scheme::ImplicitBdf2), &State::zeros(0.0, 2, 1))
            .unwrap();
        let mut buf = Vec::new();
        t.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"PTRJ");
        assert_eq!(buf.len(), 4 + 4 + 24 + 8 + 9 * 8 * 4);
        let (tau, states) = read_binary_states(buf.as_slice()).unwrap();
        assert_eq!(tau, grid.tau());
        assert_eq!(states, t.states);
        let csv = t.to_csv(&sys);
        assert!(csv.starts_with("t,norm_u_A,norm_p_C,inner_iterations,residual\n"));
        assert_eq!(csv.lines().count(), 10);
    }
}
