//! Built-in benchmark problems and external system ingestion.

mod external;
mod fem;
mod model;

pub use external::{export_system, load_external_system, RHS_FILE};
pub use fem::{assemble_unit_square, bubble_loads, unit_square_problem, unit_square_system, MaterialParams, StructuredMesh2D};
pub use model::{model_problem, model_system, MODEL_COUPLING_FACTOR};

use crate::error::Result;
use crate::system::{PoroSystem, State};

/// A system together with its initial state and the nominal coupling
/// parameter used to pick `γ` and `K`.
#[derive(Debug, Clone)]
pub struct Problem {
    pub name: String,
    pub system: PoroSystem,
    pub initial: State,
    pub omega: f64,
}

impl Problem {
    /// `(system, initial)` pair in the form expected by the stability sweep.
    pub fn into_parts(self) -> (PoroSystem, State) {
        (self.system, self.initial)
    }
}

/// Selects a built-in problem family by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Model,
    UnitSquare { n: usize },
}

impl ProblemKind {
    pub fn build(&self, omega: f64) -> Result<Problem> {
        match *self {
            ProblemKind::Model => model_problem(omega),
            ProblemKind::UnitSquare { n } => unit_square_problem(omega, n),
        }
    }

    /// `ω ↦ (system, initial)` for sweeps.
    pub fn family(self) -> impl Fn(f64) -> Result<(PoroSystem, State)> + Send + Sync {
        move |omega| self.build(omega).map(Problem::into_parts)
    }
}
