use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, Vector};
use crate::system::{consistent_state, Forcing, PoroSystem};

use super::Problem;

/// `ω(τ = 0) / ω̃` for the model problem.
pub const MODEL_COUPLING_FACTOR: f64 = 13.0 * (2.0 - SQRT_2) / 9.0;

/// The 3×3 model system scaled so that `c_A = c_C = 1` and `C_D = √ω̃`.
///
/// `A = tridiag(−1, 2, −1)/(2−√2)`, `B = C = 1`, `D = √ω̃·[2 1 2]/3`,
/// `f ≡ [1, 1, 1]`, `g = sin t`.
pub fn model_system(omega_tilde: f64) -> Result<PoroSystem> {
    if !(omega_tilde > 0.0 && omega_tilde.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "model problem needs omega > 0, got {omega_tilde}"
        )));
    }
    let s = 1.0 / (2.0 - SQRT_2);
    let a = DenseMatrix::from_row_slice(
        3,
        3,
        &[2.0 * s, -s, 0.0, -s, 2.0 * s, -s, 0.0, -s, 2.0 * s],
    );
    let one = DenseMatrix::from_element(1, 1, 1.0);
    let w = omega_tilde.sqrt() / 3.0;
    let d = DenseMatrix::from_row_slice(1, 3, &[2.0 * w, w, 2.0 * w]);
    PoroSystem::new(
        a,
        one.clone(),
        one,
        d,
        Forcing::Constant(Vector::from_element(3, 1.0)),
        Forcing::Sine(Vector::from_element(1, 1.0)),
    )
}

/// Model system with `p⁰ = 1` and the consistent `u⁰`.
pub fn model_problem(omega_tilde: f64) -> Result<Problem> {
    let system = model_system(omega_tilde)?;
    let initial = consistent_state(&system, 0.0, Vector::from_element(1, 1.0))?;
    Ok(Problem {
        name: format!("model(omega={omega_tilde})"),
        system,
        initial,
        omega: omega_tilde,
    })
}
