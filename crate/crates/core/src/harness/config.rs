use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::problems::{Problem, ProblemKind};
use crate::system::{min_inner_iterations, relaxation_gamma, Init, Scheme, SchemeConfig, TimeGrid};

/// Keys accepted in a run configuration file.
pub const CONFIG_KEYS: &[&str] = &[
    "problem",
    "mesh_n",
    "omega",
    "schemes",
    "tau",
    "T",
    "K",
    "gamma",
    "init_substeps",
    "ref_factor",
    "tol_factor",
    "out",
    "seed",
    "omega_min",
    "omega_max",
    "sweep_steps",
    "resolution",
    "mesh_sizes",
    "repetitions",
];

/// A step size written either as a decimal number or as `2^-k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSize(pub f64);

impl FromStr for StepSize {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        let v = match s.strip_prefix("2^") {
            Some(e) => e
                .parse::<i32>()
                .map(|e| 2f64.powi(e))
                .map_err(|_| format!("bad exponent in '{s}'"))?,
            None => s.parse::<f64>().map_err(|_| format!("'{s}' is not a step size"))?,
        };
        Ok(StepSize(v))
    }
}

/// Parameters shared by every harness run.
///
/// `omega` is the problem's nominal coupling parameter. The defaults derived
/// from it use the coupling strength `ω = λ_max(C⁻¹ D A⁻¹ Dᵀ)` of the built
/// system: an empty `ks` means `K = min_inner_iterations(ω)` and
/// `gamma = None` means `2/(2+ω)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub omega: f64,
    pub schemes: Vec<Scheme>,
    pub taus: Vec<f64>,
    pub horizon: f64,
    pub ks: Vec<usize>,
    pub gamma: Option<f64>,
    pub init_substeps: usize,
    pub ref_factor: usize,
    /// Fixed-stress tolerance is `tol_factor · τ³`.
    pub tol_factor: f64,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub omega_range: (f64, f64),
    pub sweep_steps: usize,
    pub resolution: f64,
    pub mesh_sizes: Vec<usize>,
    pub repetitions: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: ProblemKind::Model,
            omega: 1.0,
            schemes: vec![Scheme::NovelIterative],
            taus: (4..=10).map(|e| 2f64.powi(-e)).collect(),
            horizon: 1.0,
            ks: Vec::new(),
            gamma: None,
            init_substeps: 1,
            ref_factor: 8,
            tol_factor: 1.0,
            out: None,
            seed: 0,
            omega_range: (0.05, 20.0),
            sweep_steps: 1 << 10,
            resolution: 1e-2,
            mesh_sizes: vec![16, 32],
            repetitions: 3,
        }
    }
}

fn config_error(origin: &Path, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{}: {msg}", origin.display()))
}

impl RunConfig {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_kv(&KeyValues::read(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_kv(&KeyValues::parse(text, "<config>")?)
    }

    /// Starts from [`RunConfig::default`] and applies every key in `kv`.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        kv.reject_unknown(CONFIG_KEYS)?;
        let mut cfg = Self::default();
        let mesh_n = kv.parse_opt::<usize>("mesh_n")?.unwrap_or(8);
        if let Some(p) = kv.get("problem") {
            cfg.problem = match p {
                "model" => ProblemKind::Model,
                "unit_square" => ProblemKind::UnitSquare { n: mesh_n },
                other => {
                    return Err(config_error(
                        kv.origin(),
                        format!("unknown problem '{other}' (expected model or unit_square)"),
                    ))
                }
            };
        } else if kv.get("mesh_n").is_some() {
            return Err(config_error(kv.origin(), "mesh_n requires problem = unit_square"));
        }
        if let Some(v) = kv.parse_opt("omega")? {
            cfg.omega = v;
        }
        if let Some(v) = kv.get("schemes") {
            cfg.schemes = v
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(str::parse)
                .collect::<Result<_>>()?;
        }
        if let Some(v) = kv.parse_list::<StepSize>("tau")? {
            cfg.taus = v.into_iter().map(|s| s.0).collect();
        }
        if let Some(v) = kv.parse_opt("T")? {
            cfg.horizon = v;
        }
        if let Some(v) = kv.parse_list("K")? {
            cfg.ks = v;
        }
        cfg.gamma = kv.parse_opt("gamma")?;
        if let Some(v) = kv.parse_opt("init_substeps")? {
            cfg.init_substeps = v;
        }
        if let Some(v) = kv.parse_opt("ref_factor")? {
            cfg.ref_factor = v;
        }
        if let Some(v) = kv.parse_opt("tol_factor")? {
            cfg.tol_factor = v;
        }
        cfg.out = kv.get("out").map(PathBuf::from);
        if let Some(v) = kv.parse_opt("seed")? {
            cfg.seed = v;
        }
        if let Some(v) = kv.parse_opt("omega_min")? {
            cfg.omega_range.0 = v;
        }
        if let Some(v) = kv.parse_opt("omega_max")? {
            cfg.omega_range.1 = v;
        }
        if let Some(v) = kv.parse_opt("sweep_steps")? {
            cfg.sweep_steps = v;
        }
        if let Some(v) = kv.parse_opt("resolution")? {
            cfg.resolution = v;
        }
        if let Some(v) = kv.parse_list("mesh_sizes")? {
            cfg.mesh_sizes = v;
        }
        if let Some(v) = kv.parse_opt("repetitions")? {
            cfg.repetitions = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return bad(format!("omega must be > 0, got {}", self.omega));
        }
        if let ProblemKind::UnitSquare { n } = self.problem {
            if n < 4 {
                return bad(format!("mesh_n must be >= 4, got {n}"));
            }
        }
        if self.schemes.is_empty() {
            return bad("at least one scheme is required".into());
        }
        if self.taus.is_empty() || self.taus.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return bad(format!("step sizes must be positive, got {:?}", self.taus));
        }
        if !is_halving_chain(&self.taus) {
            return bad(format!("step sizes must form a halving chain, got {:?}", self.taus));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("T must be > 0, got {}", self.horizon));
        }
        for &tau in &self.taus {
            TimeGrid::with_step(self.horizon, tau).map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.ks.contains(&0) {
            return bad("K values must be >= 1".into());
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g <= 1.0) {
                return bad(format!("gamma must lie in (0, 1], got {g}"));
            }
        }
        if self.init_substeps == 0 || self.ref_factor == 0 || self.repetitions == 0 {
            return bad("init_substeps, ref_factor and repetitions must be >= 1".into());
        }
        if !(self.tol_factor > 0.0) {
            return bad(format!("tol_factor must be > 0, got {}", self.tol_factor));
        }
        let (lo, hi) = self.omega_range;
        if !(lo > 0.0 && hi > lo) {
            return bad(format!("omega range [{lo}, {hi}] is empty"));
        }
        if self.sweep_steps < 2 || !(self.resolution > 0.0) {
            return bad("sweep_steps must be >= 2 and resolution > 0".into());
        }
        if self.mesh_sizes.iter().any(|&n| n < 4) {
            return bad("mesh sizes must be >= 4".into());
        }
        Ok(())
    }

    /// `K` values to run, defaulting to `min_inner_iterations(coupling)`.
    pub fn resolved_ks(&self, coupling: f64) -> Vec<usize> {
        if self.ks.is_empty() {
            vec![min_inner_iterations(coupling)]
        } else {
            self.ks.clone()
        }
    }

    pub fn build_problem(&self) -> Result<Problem> {
        self.problem.build(self.omega)
    }

    /// Scheme parameters for one `(scheme, K, τ)` cell of a problem with
    /// coupling strength `coupling`.
    pub fn scheme_config(
        &self,
        scheme: Scheme,
        k: usize,
        tau: f64,
        coupling: f64,
    ) -> Result<SchemeConfig> {
        let mut cfg = SchemeConfig::new(scheme)
            .with_k(k)
            .with_init(Init::ImplicitEuler {
                substeps: self.init_substeps,
            })
            .with_tol(self.tol_factor * tau * tau * tau);
        if matches!(scheme, Scheme::NovelIterative | Scheme::IncrementSplitting) {
            cfg = cfg.with_gamma(match self.gamma {
                Some(g) => g,
                None => relaxation_gamma(coupling)?,
            });
        }
        Ok(cfg)
    }

    /// `(scheme, K)` pairs; schemes without inner iterations appear once.
    pub fn scheme_cells(&self, coupling: f64) -> Vec<(Scheme, Option<usize>)> {
        let ks = self.resolved_ks(coupling);
        let mut cells = Vec::new();
        for &s in &self.schemes {
            if s.uses_k() {
                cells.extend(ks.iter().map(|&k| (s, Some(k))));
            } else {
                cells.push((s, None));
            }
        }
        cells
    }
}

/// True when each entry is half the previous one (relative `1e−9`).
pub fn is_halving_chain(taus: &[f64]) -> bool {
    taus.windows(2)
        .all(|w| (w[0] - 2.0 * w[1]).abs() <= 1e-9 * w[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg = RunConfig::parse(
            "problem = unit_square\nmesh_n = 6\nomega = 2.5\nschemes = implicit, novel\n\
             tau = 2^-3, 2^-4\nK = 2 3\ngamma = 0.5 # override\n",
        )
        .unwrap();
        assert_eq!(cfg.problem, ProblemKind::UnitSquare { n: 6 });
        assert_eq!(cfg.taus, vec![0.125, 0.0625]);
        assert_eq!(cfg.ks, vec![2, 3]);
        assert_eq!(cfg.gamma, Some(0.5));
        assert_eq!(cfg.scheme_cells(1.0).len(), 3);
        let d = RunConfig::default();
        assert_eq!(d.taus.len(), 7);
        assert_eq!(d.resolved_ks(1.0), vec![3]);
        assert_eq!(d.resolved_ks(0.3), vec![1]);
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            "problem = cube",
            "omega = -1",
            "tau = 0.1, 0.03",
            "gamma = 1.5",
            "K = 0",
            "colour = red",
            "schemes = euler",
            "mesh_n = 8",
            "tau = 0.3",
        ] {
            assert!(matches!(RunConfig::parse(text), Err(Error::Config(_) | Error::Parse { .. })), "{text}");
        }
    }

    #[test]
    fn step_size_syntax() {
        assert_eq!("2^-10".parse::<StepSize>().unwrap().0, 2f64.powi(-10));
        assert_eq!("0.25".parse::<StepSize>().unwrap().0, 0.25);
        assert!("2^x".parse::<StepSize>().is_err());
    }
}
