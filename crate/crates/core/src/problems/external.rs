use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::linalg::{mtx, DenseMatrix, Vector};
use crate::system::{Forcing, PoroSystem};

use super::fem::bubble_loads;

/// Right-hand-side descriptor inside a system directory.
pub const RHS_FILE: &str = "rhs.conf";

const MATRICES: [&str; 4] = ["A", "B", "C", "D"];

/// Loads `A.mtx`, `B.mtx`, `C.mtx`, `D.mtx` and the optional `rhs.conf` from
/// `dir` and validates the result.
///
/// `rhs.conf` holds `f = <selector>` and `g = <selector>`, each one of
///
/// ```text
/// zero
/// constant <c>            c·1
/// sin <c>                 sin(t)·c·1
/// vector <file>           constant vector from a Matrix Market file
/// sin_vector <file>       sin(t) times that vector
/// bubble <n>              unit-square bubble load on an n×n mesh
/// sin_bubble <n>          sin(t) times the bubble load
/// ```
///
/// Missing keys (or a missing file) mean `zero`. Vector paths are relative to
/// `dir`.
pub fn load_external_system(dir: impl AsRef<Path>) -> Result<PoroSystem> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::MissingFile(dir.to_path_buf()));
    }
    let [a, b, c, d] = MATRICES.map(|name| mtx::read_dense(dir.join(format!("{name}.mtx"))));
    let (a, b, c, d) = (a?, b?, c?, d?);
    let rhs_path = dir.join(RHS_FILE);
    let rhs = if rhs_path.exists() {
        let kv = KeyValues::read(&rhs_path)?;
        kv.reject_unknown(&["f", "g"])?;
        Some(kv)
    } else {
        None
    };
    let selector = |key: &str| rhs.as_ref().and_then(|kv| kv.get(key)).unwrap_or("zero");
    let f = parse_selector(selector("f"), dir, &rhs_path, a.nrows(), Field::Displacement)?;
    let g = parse_selector(selector("g"), dir, &rhs_path, b.nrows(), Field::Pressure)?;
    PoroSystem::new(a, b, c, d, f, g)
}

#[derive(Clone, Copy)]
enum Field {
    Displacement,
    Pressure,
}

fn parse_selector(text: &str, dir: &Path, origin: &Path, dim: usize, field: Field) -> Result<Forcing> {
    let bad = |msg: String| Error::Config(format!("{}: {msg}", origin.display()));
    let mut words = text.split_whitespace();
    let kind = words.next().unwrap_or("zero");
    let arg = words.next();
    if words.next().is_some() {
        return Err(bad(format!("trailing input in selector '{text}'")));
    }
    let need = |what: &str| arg.ok_or_else(|| bad(format!("selector '{kind}' needs {what}")));
    let number = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| bad(format!("'{s}' is not a number")))
    };
    let check = |v: Vector| {
        if v.len() == dim {
            Ok(v)
        } else {
            Err(Error::DimensionMismatch {
                context: "right-hand side vector",
                expected: dim,
                found: v.len(),
            })
        }
    };
    let bubble = |s: &str| -> Result<Vector> {
        let n = s
            .parse::<usize>()
            .map_err(|_| bad(format!("'{s}' is not a mesh size")))?;
        let (fu, fp) = bubble_loads(n)?;
        check(match field {
            Field::Displacement => fu,
            Field::Pressure => fp,
        })
    };
    Ok(match kind {
        "zero" => Forcing::Zero(dim),
        "constant" => Forcing::Constant(Vector::from_element(dim, number(need("a value")?)?)),
        "sin" => Forcing::Sine(Vector::from_element(dim, number(need("a value")?)?)),
        "vector" => Forcing::Constant(check(mtx::read_vector(dir.join(need("a file")?))?)?),
        "sin_vector" => Forcing::Sine(check(mtx::read_vector(dir.join(need("a file")?))?)?),
        "bubble" => Forcing::Constant(bubble(need("a mesh size")?)?),
        "sin_bubble" => Forcing::Sine(bubble(need("a mesh size")?)?),
        other => return Err(bad(format!("unknown selector '{other}'"))),
    })
}

/// Writes `sys` to `dir` in the layout read by [`load_external_system`].
/// Custom forcings cannot be serialized and are rejected.
pub fn export_system(sys: &PoroSystem, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, m) in MATRICES.iter().zip([sys.a(), sys.b(), sys.c(), sys.d()]) {
        write_matrix(&dir.join(format!("{name}.mtx")), m)?;
    }
    let mut conf = String::new();
    for (key, forcing) in [("f", sys.f()), ("g", sys.g())] {
        let selector = match forcing {
            Forcing::Zero(_) => "zero".to_string(),
            Forcing::Constant(v) => {
                mtx::write_vector(dir.join(format!("{key}.mtx")), v)?;
                format!("vector {key}.mtx")
            }
            Forcing::Sine(v) => {
                mtx::write_vector(dir.join(format!("{key}.mtx")), v)?;
                format!("sin_vector {key}.mtx")
            }
            Forcing::Custom { .. } => {
                return Err(Error::Config(format!(
                    "right-hand side {key} is a custom function and cannot be exported"
                )))
            }
        };
        let _ = writeln!(conf, "{key} = {selector}");
    }
    let path: PathBuf = dir.join(RHS_FILE);
    std::fs::write(&path, conf).map_err(|e| Error::io(&path, e))
}

fn write_matrix(path: &Path, m: &DenseMatrix) -> Result<()> {
    let nnz = m.iter().filter(|&&v| v != 0.0).count();
    if 2 * nnz < m.len() {
        mtx::write_sparse(path, m)
    } else {
        mtx::write_dense(path, m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::model_system;

    #[test]
    fn model_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let sys = model_system(1.0).unwrap();
        export_system(&sys, dir.path()).unwrap();
        let back = load_external_system(dir.path()).unwrap();
        assert_eq!(back.a(), sys.a());
        assert_eq!(back.b(), sys.b());
        assert_eq!(back.c(), sys.c());
        assert_eq!(back.d(), sys.d());
        for t in [0.0, 0.4, 2.0] {
            assert_eq!(back.f().eval(t), sys.f().eval(t));
            assert_eq!(back.g().eval(t), sys.g().eval(t));
        }
    }

    #[test]
    fn missing_d_names_file() {
        let dir = tempfile::tempdir().unwrap();
        export_system(&model_system(1.0).unwrap(), dir.path()).unwrap();
        std::fs::remove_file(dir.path().join("D.mtx")).unwrap();
        match load_external_system(dir.path()) {
            Err(Error::MissingFile(p)) => assert!(p.ends_with("D.mtx")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn selectors() {
        let dir = tempfile::tempdir().unwrap();
        export_system(&model_system(1.0).unwrap(), dir.path()).unwrap();
        let conf = dir.path().join(RHS_FILE);
        std::fs::write(&conf, "f = constant 2\ng = sin 3\n").unwrap();
        let sys = load_external_system(dir.path()).unwrap();
        assert_eq!(sys.f().eval(1.0), Vector::from_element(3, 2.0));
        assert_eq!(sys.g().eval(0.5)[0], 3.0 * 0.5f64.sin());
        std::fs::write(&conf, "f = bubble 4\n").unwrap();
        assert!(matches!(
            load_external_system(dir.path()),
            Err(Error::DimensionMismatch { .. })
        ));
        std::fs::write(&conf, "f = cosine 1\n").unwrap();
        assert!(matches!(load_external_system(dir.path()), Err(Error::Config(_))));
        std::fs::write(&conf, "h = zero\n").unwrap();
        assert!(load_external_system(dir.path()).is_err());
        std::fs::remove_file(&conf).unwrap();
        assert!(load_external_system(dir.path()).unwrap().f().is_zero());
    }

    #[test]
    fn asymmetric_a_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let sys = model_system(1.0).unwrap();
        export_system(&sys, dir.path()).unwrap();
        let mut a = sys.a().clone();
        a[(0, 1)] += 1e-6;
        mtx::write_dense(dir.path().join("A.mtx"), &a).unwrap();
        match load_external_system(dir.path()) {
            Err(Error::StructuralAssumption { matrix, .. }) => assert_eq!(matrix, "A"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
