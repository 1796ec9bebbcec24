use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, Vector};
use crate::system::{solve_static, Forcing, PoroSystem};

use super::Problem;

const BOUNDARY_EPS: f64 = 1e-12;

/// Material coefficients of the Biot model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialParams {
    pub mu: f64,
    pub lambda: f64,
    /// Biot–Willis coefficient.
    pub alpha: f64,
    /// Biot modulus `M`.
    pub biot_modulus: f64,
    pub permeability: f64,
    pub viscosity: f64,
}

impl MaterialParams {
    /// `μ = λ = 1/2`, `M = κ = ν = 1`, `α = √ω`.
    pub fn unit_square(omega: f64) -> Self {
        Self {
            mu: 0.5,
            lambda: 0.5,
            alpha: omega.sqrt(),
            biot_modulus: 1.0,
            permeability: 1.0,
            viscosity: 1.0,
        }
    }

    /// All coefficients must be finite and strictly positive. `α > 1` is
    /// accepted because the coupling sweeps drive `α = √ω` past one.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("mu", self.mu),
            ("lambda", self.lambda),
            ("alpha", self.alpha),
            ("biot_modulus", self.biot_modulus),
            ("permeability", self.permeability),
            ("viscosity", self.viscosity),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "material parameter {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Uniform triangulation of the unit square with `n` cells per side.
///
/// Node `(i, j)` at `(i/n, j/n)` has index `j(n+1) + i`. Each cell is split
/// along its lower-left to upper-right diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredMesh2D {
    pub n: usize,
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
}

impl StructuredMesh2D {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("mesh needs n >= 1".into()));
        }
        let h = 1.0 / n as f64;
        let idx = |i: usize, j: usize| j * (n + 1) + i;
        let mut nodes = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                nodes.push([i as f64 * h, j as f64 * h]);
            }
        }
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            }
        }
        Ok(Self { n, nodes, triangles })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// `id,x,y` rows.
    pub fn nodes_csv(&self) -> String {
        let mut s = String::from("id,x,y\n");
        for (k, [x, y]) in self.nodes.iter().enumerate() {
            let _ = writeln!(s, "{k},{x:.17e},{y:.17e}");
        }
        s
    }

    /// `id,n0,n1,n2` rows.
    pub fn elements_csv(&self) -> String {
        let mut s = String::from("id,n0,n1,n2\n");
        for (k, [a, b, c]) in self.triangles.iter().enumerate() {
            let _ = writeln!(s, "{k},{a},{b},{c}");
        }
        s
    }

    pub fn write_csv(&self, nodes: impl AsRef<Path>, elements: impl AsRef<Path>) -> Result<()> {
        let (nodes, elements) = (nodes.as_ref(), elements.as_ref());
        std::fs::write(nodes, self.nodes_csv()).map_err(|e| Error::io(nodes, e))?;
        std::fs::write(elements, self.elements_csv()).map_err(|e| Error::io(elements, e))
    }

    fn element(&self, t: usize) -> Element {
        let [p0, p1, p2] = self.triangles[t].map(|k| self.nodes[k]);
        let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        let grads = [
            [(p1[1] - p2[1]) / det, (p2[0] - p1[0]) / det],
            [(p2[1] - p0[1]) / det, (p0[0] - p2[0]) / det],
            [(p0[1] - p1[1]) / det, (p1[0] - p0[0]) / det],
        ];
        let mid = |a: [f64; 2], b: [f64; 2]| [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
        Element {
            area: det.abs() / 2.0,
            grads,
            // midpoint m opposite to vertex m
            midpoints: [mid(p1, p2), mid(p2, p0), mid(p0, p1)],
        }
    }
}

struct Element {
    area: f64,
    grads: [[f64; 2]; 3],
    midpoints: [[f64; 2]; 3],
}

impl Element {
    /// `∫ h φ_a` with the edge-midpoint rule.
    fn load(&self, a: usize, h: impl Fn([f64; 2]) -> f64) -> f64 {
        let s: f64 = (0..3).filter(|&m| m != a).map(|m| 0.5 * h(self.midpoints[m])).sum();
        self.area / 3.0 * s
    }
}

fn bubble(x: [f64; 2]) -> f64 {
    x[0] * x[1] * (1.0 - x[0]) * (1.0 - x[1])
}

fn on(v: f64, at: f64) -> bool {
    (v - at).abs() < BOUNDARY_EPS
}

/// Free degrees of freedom: displacement clamped on `y = 0`, normal
/// displacement fixed on `x = 0` and `x = 1`, pressure fixed on `y = 1`.
struct Dofs {
    u: Vec<[Option<usize>; 2]>,
    p: Vec<Option<usize>>,
    n_u: usize,
    n_p: usize,
}

impl Dofs {
    fn unit_square(mesh: &StructuredMesh2D) -> Self {
        let mut n_u = 0;
        let mut u = Vec::with_capacity(mesh.node_count());
        for &[x, y] in &mesh.nodes {
            let mut slot = [None; 2];
            for (c, s) in slot.iter_mut().enumerate() {
                let fixed = on(y, 0.0) || (c == 0 && (on(x, 0.0) || on(x, 1.0)));
                if !fixed {
                    *s = Some(n_u);
                    n_u += 1;
                }
            }
            u.push(slot);
        }
        let (p, n_p) = number(mesh.nodes.iter().map(|&[_, y]| !on(y, 1.0)));
        Self { u, p, n_u, n_p }
    }
}

fn number(free: impl Iterator<Item = bool>) -> (Vec<Option<usize>>, usize) {
    let mut n = 0;
    let map = free
        .map(|f| {
            f.then(|| {
                n += 1;
                n - 1
            })
        })
        .collect();
    (map, n)
}

/// Bubble load vectors `(∫ b φ_i e_c, ∫ b q_k)` on the unit-square numbering.
pub fn bubble_loads(n: usize) -> Result<(Vector, Vector)> {
    let mesh = StructuredMesh2D::new(n)?;
    let dofs = Dofs::unit_square(&mesh);
    let mut fu = Vector::zeros(dofs.n_u);
    let mut fp = Vector::zeros(dofs.n_p);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let el = mesh.element(t);
        for a in 0..3 {
            let v = el.load(a, bubble);
            for i in dofs.u[tri[a]].iter().flatten() {
                fu[*i] += v;
            }
            if let Some(k) = dofs.p[tri[a]] {
                fp[k] += v;
            }
        }
    }
    Ok((fu, fp))
}

/// Pressure stiffness, mass and `∫φ` load over the given pressure numbering.
fn assemble_scalar(
    mesh: &StructuredMesh2D,
    pmap: &[Option<usize>],
    n_p: usize,
    conductivity: f64,
    storage: f64,
) -> (DenseMatrix, DenseMatrix, Vector) {
    let mut b = DenseMatrix::zeros(n_p, n_p);
    let mut c = DenseMatrix::zeros(n_p, n_p);
    let mut load = Vector::zeros(n_p);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let el = mesh.element(t);
        for a in 0..3 {
            let Some(i) = pmap[tri[a]] else { continue };
            load[i] += el.area / 3.0;
            for bb in 0..3 {
                let Some(j) = pmap[tri[bb]] else { continue };
                let (ga, gb) = (el.grads[a], el.grads[bb]);
                b[(i, j)] += conductivity * el.area * (ga[0] * gb[0] + ga[1] * gb[1]);
                let w = if a == bb { 2.0 } else { 1.0 };
                c[(i, j)] += storage * el.area * w / 12.0;
            }
        }
    }
    (b, c, load)
}

/// P1/P1 system on the unit square with the given material.
pub fn assemble_unit_square(mesh: &StructuredMesh2D, mat: &MaterialParams) -> Result<PoroSystem> {
    mat.validate()?;
    let dofs = Dofs::unit_square(mesh);
    let mut a = DenseMatrix::zeros(dofs.n_u, dofs.n_u);
    let mut d = DenseMatrix::zeros(dofs.n_p, dofs.n_u);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let el = mesh.element(t);
        for ia in 0..3 {
            let ga = el.grads[ia];
            for ca in 0..2 {
                let Some(i) = dofs.u[tri[ia]][ca] else { continue };
                for ib in 0..3 {
                    let gb = el.grads[ib];
                    for cb in 0..2 {
                        let Some(j) = dofs.u[tri[ib]][cb] else { continue };
                        let dot = if ca == cb { ga[0] * gb[0] + ga[1] * gb[1] } else { 0.0 };
                        let strain = mat.mu * (dot + ga[cb] * gb[ca]);
                        a[(i, j)] += el.area * (strain + mat.lambda * ga[ca] * gb[cb]);
                    }
                }
                // D_kj = α ∫ q_k ∇·v_j
                for q in 0..3 {
                    let Some(k) = dofs.p[tri[q]] else { continue };
                    d[(k, i)] += mat.alpha * el.area / 3.0 * ga[ca];
                }
            }
        }
    }
    let (b, c, g) = assemble_scalar(
        mesh,
        &dofs.p,
        dofs.n_p,
        mat.permeability / mat.viscosity,
        1.0 / mat.biot_modulus,
    );
    let (f, _) = bubble_loads(mesh.n)?;
    PoroSystem::new(a, b, c, d, Forcing::Constant(f), Forcing::Sine(g))
}

/// Unit-square system with `α = √ω` on an `n × n` mesh.
pub fn unit_square_system(omega: f64, n: usize) -> Result<PoroSystem> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "unit-square problem needs omega > 0, got {omega}"
        )));
    }
    if n < 4 {
        return Err(Error::InvalidParameter(format!("unit-square mesh needs n >= 4, got {n}")));
    }
    assemble_unit_square(&StructuredMesh2D::new(n)?, &MaterialParams::unit_square(omega))
}

/// Unit-square system started from the static solution at `t = 0`.
pub fn unit_square_problem(omega: f64, n: usize) -> Result<Problem> {
    let system = unit_square_system(omega, n)?;
    let initial = solve_static(&system, 0.0)?;
    Ok(Problem {
        name: format!("unit_square(omega={omega},n={n})"),
        system,
        initial,
        omega,
    })
}
