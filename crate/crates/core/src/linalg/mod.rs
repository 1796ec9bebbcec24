//! Dense and sparse linear-algebra kernels.
//!
//! Dense storage is `nalgebra`'s [`DMatrix`]/[`DVector`]; the sparse type is a
//! plain CSR matrix used by the CG path and the Matrix Market reader.

mod csr;
mod eigen;
pub mod mtx;
mod solve;

use nalgebra::{DMatrix, DVector};

pub use csr::CsrMatrix;
pub use eigen::{
    general_eigenvalues, max_generalized_eigenvalue, min_singular_value, power_iteration, spectral_norm,
    symmetric_eigenvalues, symmetric_extremes, SymmetricSqrt, POWER_MAX_ITER, POWER_TOLERANCE,
    QR_ITERATIONS_PER_EIGENVALUE,
};
pub use solve::{
    conjugate_gradient, solve_spd, CgOutcome, Preconditioner, SolveMethod, SolverOptions,
    SpdSolver, CG_TOLERANCE, DIRECT_THRESHOLD,
};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type DenseMatrix = DMatrix<f64>;

/// `max |M_ij − M_ji| ≤ rel_tol · max |M_ij|`.
pub fn is_symmetric(m: &DenseMatrix, rel_tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = m.amax();
    let n = m.nrows();
    (0..n).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= rel_tol * scale))
}

/// `sqrt(xᵀ M x)` for symmetric positive (semi-)definite `M`.
///
/// Small negative values of `xᵀMx` from rounding are clamped to zero; anything
/// below `−1e−12 · ‖x‖² · ‖M‖_F` is reported as indefinite.
pub fn weighted_norm(x: &Vector, m: &DenseMatrix) -> Result<f64> {
    if m.nrows() != x.len() || m.ncols() != x.len() {
        return Err(Error::DimensionMismatch {
            context: "weighted norm",
            expected: m.nrows(),
            found: x.len(),
        });
    }
    let q = x.dot(&(m * x));
    if !q.is_finite() {
        return Err(Error::NonFinite("weighted norm"));
    }
    if q < -1e-12 * x.norm_squared() * m.norm() {
        return Err(Error::Indefinite { value: q });
    }
    Ok(q.max(0.0).sqrt())
}

/// Squared weighted norm without the definiteness check, for hot loops.
pub(crate) fn weighted_norm_sq(x: &Vector, m: &DenseMatrix) -> f64 {
    x.dot(&(m * x)).max(0.0)
}
