use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::integrators::{integrate, Trajectory};
use crate::linalg::{CsrMatrix, Vector};
use crate::problems::Problem;
use crate::system::{coupling_strength, PoroSystem, Scheme, SchemeConfig, TimeGrid};

use super::config::RunConfig;
use super::{fmt_f64, fmt_opt, write_text};

/// `A`- and `C`-norms with sparse products.
#[derive(Debug, Clone)]
pub struct EnergyNorms {
    a: CsrMatrix,
    c: CsrMatrix,
}

impl EnergyNorms {
    pub fn new(sys: &PoroSystem) -> Self {
        Self {
            a: CsrMatrix::from_dense(sys.a()),
            c: CsrMatrix::from_dense(sys.c()),
        }
    }

    pub fn a_sq(&self, x: &Vector) -> f64 {
        quad(&self.a, x)
    }

    pub fn c_sq(&self, x: &Vector) -> f64 {
        quad(&self.c, x)
    }
}

fn quad(m: &CsrMatrix, x: &Vector) -> f64 {
    let mut y = vec![0.0; m.rows()];
    m.mul_vec_into(x.as_slice(), &mut y);
    x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>().max(0.0)
}

/// Relative errors of a trajectory against a reference on a finer grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryErrors {
    /// `sqrt(Σₙ τ(‖eᵤⁿ‖²_A + ‖eₚⁿ‖²_C) / Σₙ τ(‖u_refⁿ‖²_A + ‖p_refⁿ‖²_C))`.
    pub l2_time: f64,
    /// `‖eᵤ(T)‖_A / ‖u_ref(T)‖_A`.
    pub final_a: f64,
    /// `‖eₚ(T)‖_C / ‖p_ref(T)‖_C`.
    pub final_c: f64,
}

impl TrajectoryErrors {
    pub const DIVERGED: Self = Self {
        l2_time: f64::INFINITY,
        final_a: f64::INFINITY,
        final_c: f64::INFINITY,
    };
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        (num / den).sqrt()
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Compares `traj` with `reference` on the coarse nodes. The coarse step must
/// be a whole multiple of the reference step and both must cover the same
/// horizon. An incomplete (diverged) trajectory yields infinite errors.
pub fn trajectory_errors(
    norms: &EnergyNorms,
    traj: &Trajectory,
    reference: &Trajectory,
) -> Result<TrajectoryErrors> {
    let (tau, tau_ref) = (traj.grid.tau(), reference.grid.tau());
    let stride = (tau / tau_ref).round();
    if !(stride >= 1.0) || (stride * tau_ref - tau).abs() > 1e-9 * tau {
        return Err(Error::InvalidParameter(format!(
            "step {tau} is not a multiple of the reference step {tau_ref}"
        )));
    }
    let stride = stride as usize;
    if traj.grid.steps() * stride != reference.grid.steps() || !reference.is_complete() {
        return Err(Error::InvalidParameter(
            "reference trajectory does not cover the same horizon".into(),
        ));
    }
    if traj.diverged || !traj.is_complete() {
        return Ok(TrajectoryErrors::DIVERGED);
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (n, s) in traj.states.iter().enumerate() {
        let r = &reference.states[n * stride];
        num += tau * (norms.a_sq(&(&s.u - &r.u)) + norms.c_sq(&(&s.p - &r.p)));
        den += tau * (norms.a_sq(&r.u) + norms.c_sq(&r.p));
    }
    let (s, r) = (traj.last(), reference.last());
    Ok(TrajectoryErrors {
        l2_time: ratio(num, den),
        final_a: ratio(norms.a_sq(&(&s.u - &r.u)), norms.a_sq(&r.u)),
        final_c: ratio(norms.c_sq(&(&s.p - &r.p)), norms.c_sq(&r.p)),
    })
}

/// Midpoint trajectory with step `tau_min / ref_factor`.
pub fn reference_trajectory(
    problem: &Problem,
    horizon: f64,
    tau_min: f64,
    ref_factor: usize,
) -> Result<Trajectory> {
    let grid = TimeGrid::with_step(horizon, tau_min / ref_factor as f64)?;
    let traj = integrate(
        &problem.system,
        &grid,
        &SchemeConfig::new(Scheme::Midpoint),
        &problem.initial,
    )?;
    if traj.diverged {
        return Err(Error::NonFinite("reference trajectory"));
    }
    Ok(traj)
}

/// `log₂(e_{n−1}/e_n)` for successive entries; `None` on the first entry and
/// wherever either error is not finite and positive.
pub fn eoc_sequence(errors: &[f64]) -> Vec<Option<f64>> {
    let mut out = vec![None; errors.len()];
    for n in 1..errors.len() {
        let (a, b) = (errors[n - 1], errors[n]);
        if a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0 {
            out[n] = Some((a / b).log2());
        }
    }
    out
}

/// One `(τ, scheme, K)` row of a convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub tau: f64,
    pub scheme: Scheme,
    pub k: Option<usize>,
    pub error_l2_time: f64,
    pub error_final_a: f64,
    pub error_final_c: f64,
    pub eoc: Option<f64>,
    pub runtime_seconds: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
}

pub const REPORT_HEADER: &str =
    "tau,scheme,K,error_L2_time,error_final_A,error_final_C,EOC,runtime_seconds,diverged";

impl ExperimentReport {
    /// Rows of one `(scheme, K)` group in table order.
    pub fn series(&self, scheme: Scheme, k: Option<usize>) -> Vec<&ReportRow> {
        self.rows
            .iter()
            .filter(|r| r.scheme == scheme && r.k == k)
            .collect()
    }

    /// EOC of the last row of a group.
    pub fn terminal_eoc(&self, scheme: Scheme, k: Option<usize>) -> Option<f64> {
        self.series(scheme, k).last().and_then(|r| r.eoc)
    }

    pub fn to_csv(&self) -> String {
        self.csv(true)
    }

    /// Same table with the runtime column blank, for byte comparisons.
    pub fn to_csv_without_runtime(&self) -> String {
        self.csv(false)
    }

    fn csv(&self, runtime: bool) -> String {
        let mut s = String::from(REPORT_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                fmt_f64(r.tau),
                r.scheme.name(),
                r.k.map(|k| k.to_string()).unwrap_or_default(),
                fmt_f64(r.error_l2_time),
                fmt_f64(r.error_final_a),
                fmt_f64(r.error_final_c),
                fmt_opt(r.eoc),
                if runtime { fmt_f64(r.runtime_seconds) } else { String::new() },
                r.diverged,
            );
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &self.to_csv())
    }
}

/// Integrates every `(scheme, K, τ)` cell of `cfg` and tabulates errors
/// against one midpoint reference. Cells run in parallel; row order is
/// scheme-major, then `K`, then `τ` as listed.
pub fn run_convergence(cfg: &RunConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let problem = cfg.build_problem()?;
    let tau_min = cfg.taus.iter().copied().fold(f64::INFINITY, f64::min);
    let reference = reference_trajectory(&problem, cfg.horizon, tau_min, cfg.ref_factor)?;
    let norms = EnergyNorms::new(&problem.system);
    let coupling = coupling_strength(&problem.system, 0.0)?;

    let cells: Vec<(Scheme, Option<usize>, f64)> = cfg
        .scheme_cells(coupling)
        .into_iter()
        .flat_map(|(s, k)| cfg.taus.iter().map(move |&t| (s, k, t)))
        .collect();
    let mut rows = cells
        .par_iter()
        .map(|&(scheme, k, tau)| {
            let grid = TimeGrid::with_step(cfg.horizon, tau)?;
            let sc = cfg.scheme_config(scheme, k.unwrap_or(1), tau, coupling)?;
            let traj = integrate(&problem.system, &grid, &sc, &problem.initial)?;
            let e = trajectory_errors(&norms, &traj, &reference)?;
            Ok(ReportRow {
                tau,
                scheme,
                k,
                error_l2_time: e.l2_time,
                error_final_a: e.final_a,
                error_final_c: e.final_c,
                eoc: None,
                runtime_seconds: traj.stepping_seconds,
                diverged: traj.diverged,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    for group in rows.chunk_by_mut(|a, b| a.scheme == b.scheme && a.k == b.k) {
        let errors: Vec<f64> = group.iter().map(|r| r.error_l2_time).collect();
        for (r, e) in group.iter_mut().zip(eoc_sequence(&errors)) {
            r.eoc = e;
        }
    }
    Ok(ExperimentReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eoc_of_quadratic_sequence_is_two() {
        let errors: Vec<f64> = (0..6).map(|n| 3.0 * (0.5f64).powi(n).powi(2)).collect();
        let eoc = eoc_sequence(&errors);
        assert_eq!(eoc[0], None);
        for e in &eoc[1..] {
            assert!((e.unwrap() - 2.0).abs() < 1e-14);
        }
        assert_eq!(eoc_sequence(&[1.0, f64::INFINITY, 0.5]), vec![None, None, None]);
    }

    #[test]
    fn reference_against_itself_is_exact() {
        let problem = crate::problems::model_problem(0.3).unwrap();
        let reference = reference_trajectory(&problem, 1.0, 1.0 / 16.0, 2).unwrap();
        let norms = EnergyNorms::new(&problem.system);
        let e = trajectory_errors(&norms, &reference, &reference).unwrap();
        assert_eq!(e.l2_time, 0.0);
        assert_eq!(e.final_a, 0.0);
        assert_eq!(e.final_c, 0.0);
    }
}
