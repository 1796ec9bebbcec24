//! Extremal eigenvalues, symmetric square roots and weighted operator norms.

use nalgebra::linalg::Hessenberg;
use nalgebra::{Complex, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, SolverOptions, SpdSolver, Vector};

/// Default relative tolerance on the eigenvalue change between iterations.
pub const POWER_TOLERANCE: f64 = 1e-10;

/// Default iteration cap for power iteration.
pub const POWER_MAX_ITER: usize = 10_000;

/// Power iteration for the largest eigenvalue of a symmetric pencil
/// `(num, den)` with `num` positive semi-definite and `den` positive definite.
///
/// Iterates on `den⁻¹ num` with the `den`-weighted normalization, starting from
/// the all-ones vector. If the start vector is annihilated by `num`, the
/// iteration restarts from alternating-sign and then unit vectors; only when
/// every restart is annihilated is the eigenvalue reported as zero.
pub fn power_iteration<N, S>(
    n: usize,
    apply_num: N,
    solve_den: S,
    apply_den: impl Fn(&Vector) -> Result<Vector>,
    tol: f64,
    max_iter: usize,
) -> Result<f64>
where
    N: Fn(&Vector) -> Result<Vector>,
    S: Fn(&Vector) -> Result<Vector>,
{
    if n == 0 {
        return Ok(0.0);
    }
    let starts = std::iter::once(Vector::from_element(n, 1.0))
        .chain(std::iter::once(Vector::from_fn(n, |i, _| {
            if i % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        })))
        .chain((0..n).map(|i| Vector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 })));

    'restart: for start in starts {
        let den_norm = start.dot(&apply_den(&start)?).sqrt();
        let mut x = start / den_norm;
        let mut previous: Option<f64> = None;
        let mut change = f64::INFINITY;
        for it in 0..max_iter {
            let z = apply_num(&x)?;
            if z.iter().all(|&v| v == 0.0) {
                if it == 0 {
                    continue 'restart;
                }
                return Ok(0.0);
            }
            let lambda = x.dot(&z);
            if !lambda.is_finite() {
                return Err(Error::NonFinite("power iteration"));
            }
            if let Some(prev) = previous {
                change = (lambda - prev).abs() / lambda.abs().max(f64::MIN_POSITIVE);
                if change <= tol {
                    return Ok(lambda.max(0.0));
                }
            }
            previous = Some(lambda);
            let y = solve_den(&z)?;
            // den y = z, so ‖y‖²_den = yᵀ z.
            let y_norm = y.dot(&z).sqrt();
            if y_norm == 0.0 || !y_norm.is_finite() {
                return Ok(lambda.max(0.0));
            }
            x = y / y_norm;
        }
        return Err(Error::NoConvergence {
            what: "power iteration",
            iterations: max_iter,
            residual: change,
        });
    }
    Ok(0.0)
}

/// Largest eigenvalue of the pencil `(num, den)`, i.e. `λ_max(den⁻¹ num)`.
pub fn max_generalized_eigenvalue(num: &DenseMatrix, den: &DenseMatrix, tol: f64) -> Result<f64> {
    let n = den.nrows();
    if num.nrows() != n || num.ncols() != n || den.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "generalized eigenvalue pencil",
            expected: n,
            found: num.nrows(),
        });
    }
    let solver = SpdSolver::named(den, &SolverOptions::default(), "denominator")?;
    power_iteration(
        n,
        |x| Ok(num * x),
        |z| solver.solve(z),
        |x| Ok(den * x),
        tol,
        POWER_MAX_ITER,
    )
}

/// Iteration cap per eigenvalue for [`general_eigenvalues`].
pub const QR_ITERATIONS_PER_EIGENVALUE: usize = 60;

/// Eigenvalues of a general real matrix: Householder reduction to upper
/// Hessenberg form followed by Francis double-shift QR with deflation on
/// negligible subdiagonals, measured against the matrix norm when the
/// neighbouring diagonal vanishes.
pub fn general_eigenvalues(m: &DenseMatrix) -> Result<Vec<Complex<f64>>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "general eigenvalues",
            expected: n,
            found: m.ncols(),
        });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("general eigenvalues"));
    }
    let mut a = Hessenberg::new(m.clone()).h();
    for j in 0..n {
        for i in (j + 2)..n {
            a[(i, j)] = 0.0;
        }
    }
    let anorm: f64 = a.iter().map(|v| v.abs()).sum();
    let mut eig = vec![Complex::new(0.0, 0.0); n];
    if anorm == 0.0 {
        return Ok(eig);
    }
    let sign = |a: f64, b: f64| if b >= 0.0 { a.abs() } else { -a.abs() };
    let mut nn = n - 1;
    let mut t = 0.0;
    let mut total = 0;
    loop {
        let mut its = 0;
        let l = loop {
            let mut l = nn;
            while l >= 1 {
                let mut s = a[(l - 1, l - 1)].abs() + a[(l, l)].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[(l, l - 1)].abs() + s == s {
                    a[(l, l - 1)] = 0.0;
                    break;
                }
                l -= 1;
            }
            if l + 1 >= nn {
                break l;
            }
            if its == QR_ITERATIONS_PER_EIGENVALUE {
                return Err(Error::NoConvergence {
                    what: "Hessenberg QR",
                    iterations: total,
                    residual: a[(nn, nn - 1)].abs(),
                });
            }
            let mut x = a[(nn, nn)];
            let mut y = a[(nn - 1, nn - 1)];
            let mut w = a[(nn, nn - 1)] * a[(nn - 1, nn)];
            if its == 10 || its == 20 {
                // Exceptional shift.
                t += x;
                for i in 0..=nn {
                    a[(i, i)] -= x;
                }
                let s = a[(nn, nn - 1)].abs() + a[(nn - 1, nn - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            total += 1;
            let (mut p, mut q, mut r);
            let mut mm = nn - 2;
            loop {
                let z = a[(mm, mm)];
                let rr = x - z;
                let ss = y - z;
                p = (rr * ss - w) / a[(mm + 1, mm)] + a[(mm, mm + 1)];
                q = a[(mm + 1, mm + 1)] - z - rr - ss;
                r = a[(mm + 2, mm + 1)];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if mm == l {
                    break;
                }
                let u = a[(mm, mm - 1)].abs() * (q.abs() + r.abs());
                let v = p.abs() * (a[(mm - 1, mm - 1)].abs() + z.abs() + a[(mm + 1, mm + 1)].abs());
                if u + v == v {
                    break;
                }
                mm -= 1;
            }
            for i in (mm + 2)..=nn {
                a[(i, i - 2)] = 0.0;
                if i != mm + 2 {
                    a[(i, i - 3)] = 0.0;
                }
            }
            for k in mm..nn {
                let mut x = 0.0;
                if k != mm {
                    p = a[(k, k - 1)];
                    q = a[(k + 1, k - 1)];
                    r = if k != nn - 1 { a[(k + 2, k - 1)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = sign((p * p + q * q + r * r).sqrt(), p);
                if s == 0.0 {
                    continue;
                }
                if k == mm {
                    if l != mm {
                        a[(k, k - 1)] = -a[(k, k - 1)];
                    }
                } else {
                    a[(k, k - 1)] = -s * x;
                }
                p += s;
                let (x, y, z) = (p / s, q / s, r / s);
                q /= p;
                r /= p;
                for j in k..n {
                    let mut p = a[(k, j)] + q * a[(k + 1, j)];
                    if k != nn - 1 {
                        p += r * a[(k + 2, j)];
                        a[(k + 2, j)] -= p * z;
                    }
                    a[(k + 1, j)] -= p * y;
                    a[(k, j)] -= p * x;
                }
                for i in 0..=nn.min(k + 3) {
                    let mut p = x * a[(i, k)] + y * a[(i, k + 1)];
                    if k != nn - 1 {
                        p += z * a[(i, k + 2)];
                        a[(i, k + 2)] -= p * r;
                    }
                    a[(i, k + 1)] -= p * q;
                    a[(i, k)] -= p;
                }
            }
        };
        if l == nn {
            eig[nn] = Complex::new(a[(nn, nn)] + t, 0.0);
            if nn == 0 {
                break;
            }
            nn -= 1;
        } else {
            let x = a[(nn, nn)];
            let y = a[(nn - 1, nn - 1)];
            let w = a[(nn, nn - 1)] * a[(nn - 1, nn)];
            let p = 0.5 * (y - x);
            let q = p * p + w;
            let z = q.abs().sqrt();
            let x = x + t;
            if q >= 0.0 {
                let z = p + sign(z, p);
                let hi = x + z;
                let lo = if z != 0.0 { x - w / z } else { hi };
                eig[nn - 1] = Complex::new(hi, 0.0);
                eig[nn] = Complex::new(lo, 0.0);
            } else {
                eig[nn - 1] = Complex::new(x + p, -z);
                eig[nn] = Complex::new(x + p, z);
            }
            if nn < 2 {
                break;
            }
            nn -= 2;
        }
    }
    Ok(eig)
}

/// Smallest and largest eigenvalue of a symmetric matrix (dense).
pub fn symmetric_extremes(m: &DenseMatrix) -> (f64, f64) {
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn symmetric_eigenvalues(m: &DenseMatrix) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Largest singular value.
pub fn spectral_norm(m: &DenseMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Smallest singular value (`min(rows, cols)` of them are considered).
pub fn min_singular_value(m: &DenseMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Square root `W^{1/2}` and inverse square root `W^{-1/2}` of an SPD matrix.
#[derive(Debug, Clone)]
pub struct SymmetricSqrt {
    pub sqrt: DenseMatrix,
    pub inv_sqrt: DenseMatrix,
}

impl SymmetricSqrt {
    pub fn new(w: &DenseMatrix) -> Result<Self> {
        let eig = SymmetricEigen::new(w.clone());
        if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
            return Err(Error::NotPositiveDefinite("weight".into()));
        }
        let q = &eig.eigenvectors;
        let scaled = |f: fn(f64) -> f64| {
            let mut qs = q.clone();
            for (j, &l) in eig.eigenvalues.iter().enumerate() {
                qs.column_mut(j).scale_mut(f(l));
            }
            let m = &qs * q.transpose();
            (&m + m.transpose()) * 0.5
        };
        Ok(Self {
            sqrt: scaled(f64::sqrt),
            inv_sqrt: scaled(|l| 1.0 / l.sqrt()),
        })
    }

    /// `W^{1/2} M W^{-1/2}`: the congruent matrix whose 2-norm is the
    /// `W`-weighted operator norm of `M`.
    pub fn congruent(&self, m: &DenseMatrix) -> DenseMatrix {
        &self.sqrt * m * &self.inv_sqrt
    }

    /// `‖M‖_W = sup ‖Mx‖_W / ‖x‖_W`.
    pub fn operator_norm(&self, m: &DenseMatrix) -> f64 {
        spectral_norm(&self.congruent(m))
    }
}
