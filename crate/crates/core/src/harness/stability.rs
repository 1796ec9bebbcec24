use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::Result;
use crate::spectral::{stability_sweep, theoretical_critical_omega, StabilityVerdict, SweepSettings};
use crate::system::{coupling_strength, iteration_bound_curve, DIVERGENCE_FACTOR};

use super::config::RunConfig;
use super::{fmt_f64, fmt_opt, sibling, write_text};

/// Observed and predicted critical coupling for one `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilitySummary {
    pub k: usize,
    /// Largest stable family parameter; `None` when the bracket did not
    /// contain a transition.
    pub parameter_critical: Option<f64>,
    /// Coupling strength `ω(0)` of that member.
    pub omega_critical: Option<f64>,
    pub omega_theory: f64,
    /// `parameter_critical / omega_theory`.
    pub ratio: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StabilityReport {
    pub summary: Vec<StabilitySummary>,
    pub verdicts: Vec<StabilityVerdict>,
    /// `(ω, K(ω))` samples of the iteration bound curve.
    pub curve: Vec<(f64, f64)>,
}

impl StabilityReport {
    pub fn critical(&self, k: usize) -> Option<f64> {
        self.summary.iter().find(|s| s.k == k).and_then(|s| s.parameter_critical)
    }

    pub fn all_bracketed(&self) -> bool {
        self.summary.iter().all(|s| s.failure.is_none())
    }

    /// `K,parameter_critical,omega_critical,omega_theory,ratio`.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("K,parameter_critical,omega_critical,omega_theory,ratio\n");
        for r in &self.summary {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.k,
                fmt_opt(r.parameter_critical),
                fmt_opt(r.omega_critical),
                fmt_f64(r.omega_theory),
                fmt_opt(r.ratio)
            );
        }
        s
    }

    /// `K,parameter,omega,stable,max_trajectory_norm`.
    pub fn verdicts_csv(&self) -> String {
        let mut s = String::from("K,parameter,omega,stable,max_trajectory_norm\n");
        for v in &self.verdicts {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                v.k,
                fmt_f64(v.parameter),
                fmt_f64(v.omega),
                v.stable,
                fmt_f64(v.max_trajectory_norm)
            );
        }
        s
    }

    /// `omega,K_bound`.
    pub fn curve_csv(&self) -> String {
        let mut s = String::from("omega,K_bound\n");
        for (w, k) in &self.curve {
            let _ = writeln!(s, "{},{}", fmt_f64(*w), fmt_f64(*k));
        }
        s
    }

    /// Writes the summary to `path` and the verdicts and curve next to it
    /// with `_verdicts` and `_theory` suffixes.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        write_text(path, &self.summary_csv())?;
        write_text(&sibling(path, "verdicts"), &self.verdicts_csv())?;
        write_text(&sibling(path, "theory"), &self.curve_csv())
    }
}

/// Log-spaced samples of `K(ω)` over `[lo, hi]`.
pub fn theory_curve(lo: f64, hi: f64, samples: usize) -> Vec<(f64, f64)> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..samples)
        .map(|i| {
            let w = (a + (b - a) * i as f64 / (samples - 1).max(1) as f64).exp();
            (w, iteration_bound_curve(w))
        })
        .collect()
}

/// Runs one bisection per `K` of `cfg` (in parallel) over the family
/// parameters in `cfg.omega_range`. Critical values are reported both as the
/// family parameter, which is compared with the theoretical threshold, and as
/// the coupling strength `ω(0)` of that member. A bracket without a
/// transition is recorded in the summary, not raised.
pub fn run_stability(cfg: &RunConfig) -> Result<StabilityReport> {
    cfg.validate()?;
    let settings = SweepSettings {
        steps: cfg.sweep_steps,
        horizon: cfg.horizon,
        resolution: cfg.resolution,
        divergence_factor: DIVERGENCE_FACTOR,
    };
    let family = cfg.problem.family();
    let (lo, hi) = cfg.omega_range;
    let ks = if cfg.ks.is_empty() {
        let (sys, _) = family(cfg.omega)?;
        cfg.resolved_ks(coupling_strength(&sys, 0.0)?)
    } else {
        cfg.ks.clone()
    };
    let outcomes: Vec<_> = ks
        .par_iter()
        .map(|&k| (k, stability_sweep(&family, k, lo, hi, &settings)))
        .collect();

    let mut report = StabilityReport {
        curve: theory_curve(lo, hi, 200),
        ..Default::default()
    };
    for (k, outcome) in outcomes {
        let omega_theory = theoretical_critical_omega(k);
        match outcome {
            Ok(sweep) => {
                report.summary.push(StabilitySummary {
                    k,
                    parameter_critical: Some(sweep.critical_parameter),
                    omega_critical: Some(sweep.critical_omega),
                    omega_theory,
                    ratio: Some(sweep.critical_parameter / omega_theory),
                    failure: None,
                });
                report.verdicts.extend(sweep.verdicts);
            }
            Err(e @ crate::Error::NoTransition { .. }) => report.summary.push(StabilitySummary {
                k,
                parameter_critical: None,
                omega_critical: None,
                omega_theory,
                ratio: None,
                failure: Some(e.to_string()),
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_hits_known_points() {
        let c = theory_curve(1.0 / 3.0, 1.0, 2);
        assert!((c[0].1 - 1.0).abs() < 1e-12);
        assert!((c[1].1 - (1.0 + 3f64.ln() / 3f64.ln())).abs() < 1e-12);
    }
}
