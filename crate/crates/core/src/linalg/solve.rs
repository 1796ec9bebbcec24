use nalgebra::Cholesky;
use nalgebra::Dyn;

use crate::error::{Error, Result};
use crate::linalg::{is_symmetric, CsrMatrix, DenseMatrix, Vector};

/// Dimension above which [`SolveMethod::Auto`] switches from dense Cholesky to CG.
pub const DIRECT_THRESHOLD: usize = 2000;

/// Default relative residual for CG.
pub const CG_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolveMethod {
    /// Dense Cholesky up to [`DIRECT_THRESHOLD`], CG above.
    #[default]
    Auto,
    Direct,
    Cg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Preconditioner {
    None,
    #[default]
    Jacobi,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub method: SolveMethod,
    pub preconditioner: Preconditioner,
    pub tol: f64,
    pub max_iter: usize,
    pub direct_threshold: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            method: SolveMethod::Auto,
            preconditioner: Preconditioner::Jacobi,
            tol: CG_TOLERANCE,
            max_iter: 20_000,
            direct_threshold: DIRECT_THRESHOLD,
        }
    }
}

/// Outcome of a conjugate gradient run.
#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vector,
    pub iterations: usize,
    /// Relative residual `‖b − Mx‖₂ / ‖b‖₂` of the returned iterate.
    pub residual: f64,
}

/// Preconditioned conjugate gradient for a symmetric positive definite CSR matrix.
///
/// `inv_diag` is the inverse diagonal for Jacobi preconditioning.
pub fn conjugate_gradient(
    m: &CsrMatrix,
    b: &Vector,
    inv_diag: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    let n = m.rows();
    if b.len() != n || m.cols() != n {
        return Err(Error::DimensionMismatch {
            context: "conjugate gradient",
            expected: n,
            found: b.len(),
        });
    }
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return Ok(CgOutcome {
            x: Vector::zeros(n),
            iterations: 0,
            residual: 0.0,
        });
    }
    let precondition = |r: &Vector| -> Vector {
        match inv_diag {
            Some(d) => Vector::from_iterator(n, r.iter().zip(d).map(|(ri, di)| ri * di)),
            None => r.clone(),
        }
    };

    let mut x = Vector::zeros(n);
    let mut r = b.clone();
    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    let mut mp = Vector::zeros(n);
    let target = tol * b_norm;

    for it in 1..=max_iter {
        m.mul_vec_into(p.as_slice(), mp.as_mut_slice());
        let pmp = p.dot(&mp);
        if pmp <= 0.0 || !pmp.is_finite() {
            return Err(Error::NotPositiveDefinite("in conjugate gradient".into()));
        }
        let alpha = rz / pmp;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &mp, 1.0);
        let r_norm = r.norm();
        if r_norm <= target {
            return Ok(CgOutcome {
                x,
                iterations: it,
                residual: r_norm / b_norm,
            });
        }
        z = precondition(&r);
        let rz_next = r.dot(&z);
        let beta = rz_next / rz;
        rz = rz_next;
        p.axpy(1.0, &z, beta);
    }
    Err(Error::NoConvergence {
        what: "conjugate gradient",
        iterations: max_iter,
        residual: r.norm() / b_norm,
    })
}

#[derive(Debug, Clone)]
enum Backend {
    Direct(Cholesky<f64, Dyn>),
    Cg {
        matrix: CsrMatrix,
        inv_diag: Option<Vec<f64>>,
        tol: f64,
        max_iter: usize,
    },
}

/// A factorized (or preconditioned) symmetric positive definite operator,
/// reusable across many right-hand sides.
#[derive(Debug, Clone)]
pub struct SpdSolver {
    dim: usize,
    backend: Backend,
}

impl SpdSolver {
    pub fn new(m: &DenseMatrix, opts: &SolverOptions) -> Result<Self> {
        Self::named(m, opts, "operand")
    }

    /// As [`SpdSolver::new`], naming the matrix in error messages.
    pub fn named(m: &DenseMatrix, opts: &SolverOptions, name: &str) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                context: "spd solver (square matrix)",
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        if !is_symmetric(m, 1e-12) {
            return Err(Error::NotSymmetric(name.to_owned()));
        }
        let dim = m.nrows();
        let use_direct = match opts.method {
            SolveMethod::Direct => true,
            SolveMethod::Cg => false,
            SolveMethod::Auto => dim <= opts.direct_threshold,
        };
        let backend = if use_direct {
            let chol = m
                .clone()
                .cholesky()
                .ok_or_else(|| Error::NotPositiveDefinite(name.to_owned()))?;
            Backend::Direct(chol)
        } else {
            let matrix = CsrMatrix::from_dense(m);
            let inv_diag = match opts.preconditioner {
                Preconditioner::None => None,
                Preconditioner::Jacobi => {
                    let d = matrix.diagonal();
                    if d.iter().any(|&x| x <= 0.0) {
                        return Err(Error::NotPositiveDefinite(name.to_owned()));
                    }
                    Some(d.iter().map(|x| 1.0 / x).collect())
                }
            };
            Backend::Cg {
                matrix,
                inv_diag,
                tol: opts.tol,
                max_iter: opts.max_iter,
            }
        };
        Ok(Self { dim, backend })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_direct(&self) -> bool {
        matches!(self.backend, Backend::Direct(_))
    }

    pub fn solve(&self, b: &Vector) -> Result<Vector> {
        if b.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "spd solve right-hand side",
                expected: self.dim,
                found: b.len(),
            });
        }
        let x = match &self.backend {
            Backend::Direct(chol) => chol.solve(b),
            Backend::Cg {
                matrix,
                inv_diag,
                tol,
                max_iter,
            } => conjugate_gradient(matrix, b, inv_diag.as_deref(), *tol, *max_iter)?.x,
        };
        if x.iter().all(|v| v.is_finite()) {
            Ok(x)
        } else {
            Err(Error::NonFinite("spd solve"))
        }
    }

    /// Solves for every column of `rhs`.
    pub fn solve_columns(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        match &self.backend {
            Backend::Direct(chol) => {
                if rhs.nrows() != self.dim {
                    return Err(Error::DimensionMismatch {
                        context: "spd solve right-hand side",
                        expected: self.dim,
                        found: rhs.nrows(),
                    });
                }
                Ok(chol.solve(rhs))
            }
            Backend::Cg { .. } => {
                let mut out = DenseMatrix::zeros(rhs.nrows(), rhs.ncols());
                for j in 0..rhs.ncols() {
                    let x = self.solve(&rhs.column(j).into_owned())?;
                    out.set_column(j, &x);
                }
                Ok(out)
            }
        }
    }
}

/// One-shot SPD solve.
pub fn solve_spd(
    m: &DenseMatrix,
    b: &Vector,
    method: SolveMethod,
    preconditioner: Preconditioner,
    tol: f64,
) -> Result<Vector> {
    let opts = SolverOptions {
        method,
        preconditioner,
        tol,
        ..SolverOptions::default()
    };
    SpdSolver::new(m, &opts)?.solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag3() -> DenseMatrix {
        DenseMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0])
    }

    #[test]
    fn identity_returns_rhs() {
        let b = Vector::from_vec(vec![0.3, -1.0, 7.5]);
        for method in [SolveMethod::Direct, SolveMethod::Cg] {
            let x = solve_spd(&DenseMatrix::identity(3, 3), &b, method, Preconditioner::Jacobi, 1e-14)
                .unwrap();
            assert!((x - &b).norm() < 1e-15);
        }
    }

    #[test]
    fn diagonal_system() {
        let m = DenseMatrix::from_diagonal(&Vector::from_vec(vec![2.0, 4.0]));
        let b = Vector::from_vec(vec![2.0, 8.0]);
        for method in [SolveMethod::Direct, SolveMethod::Cg] {
            let x = solve_spd(&m, &b, method, Preconditioner::None, 1e-14).unwrap();
            assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn model_stiffness_closed_form_inverse() {
        // A = M3 / (2 - sqrt 2) with M3^{-1} = (1/4)[[3,2,1],[2,4,2],[1,2,3]].
        let s = 2.0 - 2f64.sqrt();
        let a = tridiag3() / s;
        let b = Vector::from_vec(vec![2.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0]);
        let m3_inv =
            DenseMatrix::from_row_slice(3, 3, &[3.0, 2.0, 1.0, 2.0, 4.0, 2.0, 1.0, 2.0, 3.0]) / 4.0;
        let expected = (m3_inv * &b) * s;
        for method in [SolveMethod::Direct, SolveMethod::Cg] {
            let x = solve_spd(&a, &b, method, Preconditioner::Jacobi, 1e-14).unwrap();
            assert!((x - &expected).norm() < 1e-13);
        }
    }

    #[test]
    fn rejects_indefinite_and_nonsymmetric() {
        let m = DenseMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            SpdSolver::new(&m, &SolverOptions::default()),
            Err(Error::NotPositiveDefinite(_))
        ));
        let m = DenseMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(
            SpdSolver::new(&m, &SolverOptions::default()),
            Err(Error::NotSymmetric(_))
        ));
    }

    #[test]
    fn cg_reports_non_convergence() {
        let m = CsrMatrix::from_dense(&tridiag3());
        let b = Vector::from_vec(vec![1.0, 2.0, 3.0]);
        match conjugate_gradient(&m, &b, None, 1e-30, 1) {
            Err(Error::NoConvergence { iterations, residual, .. }) => {
                assert_eq!(iterations, 1);
                assert!(residual > 0.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn auto_switches_to_cg_above_threshold() {
        let opts = SolverOptions {
            direct_threshold: 2,
            ..SolverOptions::default()
        };
        let s = SpdSolver::new(&tridiag3(), &opts).unwrap();
        assert!(!s.is_direct());
        let x = s.solve(&Vector::from_vec(vec![1.0, 0.0, 1.0])).unwrap();
        assert!((x - Vector::from_vec(vec![1.0, 1.0, 1.0])).norm() < 1e-11);
    }
}
