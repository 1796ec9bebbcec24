use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::error::Result;
use crate::integrators::{integrate_with, StepWorkspace};
use crate::problems::unit_square_problem;
use crate::system::{coupling_strength, Scheme, TimeGrid};

use super::config::RunConfig;
use super::convergence::{reference_trajectory, trajectory_errors, EnergyNorms};
use super::{fmt_f64, write_text};

/// Timing and work of one `(mesh, scheme, K, τ)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeRow {
    pub n: usize,
    pub scheme: Scheme,
    pub k: Option<usize>,
    pub tau: f64,
    /// Two-step updates performed (`N − 1` for a complete run).
    pub updates: usize,
    /// Relative L²-in-time error against the midpoint reference.
    pub error: f64,
    /// Median stepping time over the repetitions.
    pub wall_seconds: f64,
    /// Workspace construction and factorization time.
    pub setup_seconds: f64,
    pub spd_solves: usize,
    pub coupled_solves: usize,
    pub diverged: bool,
}

impl RuntimeRow {
    /// Solve count predicted from the scheme: `2K` SPD solves per update for
    /// the relaxed and naive iterations, `2` for semi-explicit, one coupled
    /// solve per update for implicit BDF-2 and midpoint. `None` when the count
    /// is data dependent (fixed stress).
    pub fn expected_solves(&self) -> Option<(usize, usize)> {
        let n = self.updates;
        let k = self.k.unwrap_or(1);
        match self.scheme {
            Scheme::NovelIterative | Scheme::IncrementSplitting | Scheme::NaiveIterative => {
                Some((2 * k * n, 0))
            }
            Scheme::SemiExplicitBdf2 => Some((2 * n, 0)),
            Scheme::ImplicitBdf2 | Scheme::Midpoint => Some((0, n)),
            Scheme::FixedStressBdf2 => None,
        }
    }

    pub fn counts_match(&self) -> bool {
        self.expected_solves()
            .is_none_or(|e| e == (self.spd_solves, self.coupled_solves))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RuntimeReport {
    pub rows: Vec<RuntimeRow>,
}

impl RuntimeReport {
    pub fn counts_match(&self) -> bool {
        self.rows.iter().all(RuntimeRow::counts_match)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "n,scheme,K,tau,updates,error,wall_seconds,setup_seconds,spd_solves,coupled_solves,diverged\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.n,
                r.scheme.name(),
                r.k.map(|k| k.to_string()).unwrap_or_default(),
                fmt_f64(r.tau),
                r.updates,
                fmt_f64(r.error),
                fmt_f64(r.wall_seconds),
                fmt_f64(r.setup_seconds),
                r.spd_solves,
                r.coupled_solves,
                r.diverged
            );
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &self.to_csv())
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Times every `(scheme, K, τ)` of `cfg` on the unit-square problem for each
/// of `cfg.mesh_sizes`. Cells run sequentially so timings do not compete.
/// Only the stepping loop is timed; the starting values and factorizations
/// are excluded.
pub fn run_runtime_comparison(cfg: &RunConfig) -> Result<RuntimeReport> {
    cfg.validate()?;
    let mut rows = Vec::new();
    let tau_min = cfg.taus.iter().copied().fold(f64::INFINITY, f64::min);
    for &n in &cfg.mesh_sizes {
        let problem = unit_square_problem(cfg.omega, n)?;
        let reference = reference_trajectory(&problem, cfg.horizon, tau_min, cfg.ref_factor)?;
        let norms = EnergyNorms::new(&problem.system);
        let coupling = coupling_strength(&problem.system, 0.0)?;
        for (scheme, k) in cfg.scheme_cells(coupling) {
            for &tau in &cfg.taus {
                let grid = TimeGrid::with_step(cfg.horizon, tau)?;
                let sc = cfg.scheme_config(scheme, k.unwrap_or(1), tau, coupling)?;
                let start = Instant::now();
                let ws = StepWorkspace::new(&problem.system, tau)?;
                ws.prepare(&sc)?;
                let setup_seconds = start.elapsed().as_secs_f64();
                let mut times = Vec::with_capacity(cfg.repetitions);
                let mut last = None;
                for _ in 0..cfg.repetitions {
                    let traj = integrate_with(&ws, &grid, &sc, &problem.initial)?;
                    times.push(traj.stepping_seconds);
                    last = Some(traj);
                }
                let traj = last.expect("at least one repetition");
                let work = traj.update_work();
                let updates = traj.update_count();
                rows.push(RuntimeRow {
                    n,
                    scheme,
                    k,
                    tau,
                    updates,
                    error: trajectory_errors(&norms, &traj, &reference)?.l2_time,
                    wall_seconds: median(times),
                    setup_seconds,
                    spd_solves: work.spd_solves,
                    coupled_solves: work.coupled_solves,
                    diverged: traj.diverged,
                });
            }
        }
    }
    Ok(RuntimeReport { rows })
}
