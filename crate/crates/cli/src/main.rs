//! `poroiter`: command-line driver for the experiment harness.
//!
//! Exit status: 0 on success, 1 when a run completes but a check fails (or a
//! numerical error occurs), 2 on configuration errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use poroiter_core::harness::{
    run_convergence, run_lemma_checks, run_runtime_comparison, run_single, run_stability,
    RunConfig, StepSize,
};
use poroiter_core::system::Scheme;
use poroiter_core::Error;

#[derive(Parser)]
#[command(name = "poroiter", version, about = "Iterative BDF-2 schemes for linear poroelasticity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Error and EOC table against a midpoint reference.
    Convergence(Common),
    /// Critical coupling per K by bisection, with the theoretical bound.
    Stability(Common),
    /// Matrix bounds and identities on seeded random and model systems.
    Lemmas(Common),
    /// Timings and solve counts on the unit-square problem.
    Runtime(Common),
    /// One integration; writes the trajectory CSV.
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// Key-value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scheme list, comma separated.
    #[arg(long, value_delimiter = ',')]
    scheme: Vec<Scheme>,
    /// Inner-iteration counts, comma separated.
    #[arg(long = "K", value_delimiter = ',')]
    k: Vec<usize>,
    /// Nominal coupling parameter of the problem.
    #[arg(long)]
    omega: Option<f64>,
    /// Step sizes, comma separated; `2^-k` is accepted.
    #[arg(long, value_delimiter = ',')]
    tau: Vec<StepSize>,
    /// Output CSV path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::read(path)?,
            None => RunConfig::default(),
        };
        if !self.scheme.is_empty() {
            cfg.schemes = self.scheme.clone();
        }
        if !self.k.is_empty() {
            cfg.ks = self.k.clone();
        }
        if let Some(w) = self.omega {
            cfg.omega = w;
        }
        if !self.tau.is_empty() {
            cfg.taus = self.tau.iter().map(|t| t.0).collect();
        }
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::Io {
                    path: dir.to_path_buf(),
                    source: e,
                })?;
            }
            std::fs::write(path, text).map_err(|e| Error::Io {
                path: path.to_path_buf(),
                source: e,
            })
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// `Ok(true)` when every check passed.
fn execute(command: &Command) -> Result<bool, Error> {
    match command {
        Command::Convergence(c) => {
            let cfg = c.load()?;
            let report = run_convergence(&cfg)?;
            emit(cfg.out.as_deref(), &report.to_csv())?;
            Ok(true)
        }
        Command::Stability(c) => {
            let cfg = c.load()?;
            let report = run_stability(&cfg)?;
            match &cfg.out {
                Some(path) => report.write_csv(path)?,
                None => emit(None, &report.summary_csv())?,
            }
            for s in report.summary.iter().filter(|s| s.failure.is_some()) {
                eprintln!("K={}: {}", s.k, s.failure.as_deref().unwrap_or_default());
            }
            Ok(report.all_bracketed())
        }
        Command::Lemmas(c) => {
            let cfg = c.load()?;
            let report = run_lemma_checks(cfg.seed, cfg.gamma)?;
            emit(cfg.out.as_deref(), &report.to_csv())?;
            for f in report.failures() {
                eprintln!("FAIL {} {}: {}", f.suite, f.instance, f.detail);
            }
            Ok(report.passed())
        }
        Command::Runtime(c) => {
            let cfg = c.load()?;
            let report = run_runtime_comparison(&cfg)?;
            emit(cfg.out.as_deref(), &report.to_csv())?;
            Ok(report.counts_match())
        }
        Command::Run(c) => {
            let cfg = c.load()?;
            let (problem, traj) = run_single(&cfg)?;
            emit(cfg.out.as_deref(), &traj.to_csv(&problem.system))?;
            if traj.diverged {
                eprintln!("{}: trajectory diverged", problem.name);
            }
            Ok(!traj.diverged)
        }
    }
}

fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Config(_)
            | Error::Parse { .. }
            | Error::MissingFile(_)
            | Error::InvalidParameter(_)
    )
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if is_config_error(&e) { 2 } else { 1 })
        }
    }
}
