//! Experiment drivers: convergence tables, stability sweeps, lemma checks,
//! runtime comparisons and single integrations, with CSV output.

mod config;
mod convergence;
mod lemmas;
mod runtime;
mod stability;

pub use config::{is_halving_chain, RunConfig, StepSize, CONFIG_KEYS};
pub use convergence::{
    eoc_sequence, reference_trajectory, run_convergence, trajectory_errors, EnergyNorms,
    ExperimentReport, ReportRow, TrajectoryErrors, REPORT_HEADER,
};
pub use lemmas::{
    random_system, run_lemma_checks, LemmaCheck, LemmaReport, LEMMA_MODEL_OMEGAS,
    LEMMA_RANDOM_INSTANCES, POLARIZATION_TOLERANCE,
};
pub use runtime::{run_runtime_comparison, RuntimeReport, RuntimeRow};
pub use stability::{run_stability, theory_curve, StabilityReport, StabilitySummary};

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::integrators::{integrate, Trajectory};
use crate::problems::Problem;
use crate::system::{coupling_strength, TimeGrid};

/// Integrates the first scheme, `K` and `τ` of `cfg`.
pub fn run_single(cfg: &RunConfig) -> Result<(Problem, Trajectory)> {
    cfg.validate()?;
    let problem = cfg.build_problem()?;
    let coupling = coupling_strength(&problem.system, 0.0)?;
    let (scheme, k) = cfg.scheme_cells(coupling)[0];
    let tau = cfg.taus[0];
    let grid = TimeGrid::with_step(cfg.horizon, tau)?;
    let sc = cfg.scheme_config(scheme, k.unwrap_or(1), tau, coupling)?;
    let traj = integrate(&problem.system, &grid, &sc, &problem.initial)?;
    Ok((problem, traj))
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `dir/stem_suffix.ext` next to `path`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let name = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}_{suffix}.{ext}"),
        None => format!("{stem}_{suffix}"),
    };
    path.with_file_name(name)
}
