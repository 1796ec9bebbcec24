//! Matrix Market reader and writer.
//!
//! Supports the `coordinate` and `array` formats with `real`, `double`,
//! `integer` or `pattern` fields and `general` or `symmetric` symmetry.
//! Numbers are written with 17 significant digits, so a write/read cycle
//! reproduces every `f64` bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, DenseMatrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Coordinate,
    Array,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Real,
    Integer,
    Pattern,
}

/// Parsed contents in triplet form (0-based, symmetric entries mirrored).
#[derive(Debug, Clone)]
struct Entries {
    rows: usize,
    cols: usize,
    triplets: Vec<(usize, usize, f64)>,
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_entries(text: &str, path: &Path) -> Result<Entries> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (line_no, banner) = lines
        .next()
        .ok_or_else(|| parse_error(path, 1, "empty file"))?;
    let tokens: Vec<String> = banner.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_error(path, line_no, "expected '%%MatrixMarket matrix <format> <field> <symmetry>'"));
    }
    let format = match tokens[2].as_str() {
        "coordinate" => Format::Coordinate,
        "array" => Format::Array,
        other => return Err(parse_error(path, line_no, format!("unsupported format '{other}'"))),
    };
    let field = match tokens[3].as_str() {
        "real" | "double" => Field::Real,
        "integer" => Field::Integer,
        "pattern" if format == Format::Coordinate => Field::Pattern,
        other => return Err(parse_error(path, line_no, format!("unsupported field '{other}'"))),
    };
    let symmetric = match tokens[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(parse_error(path, line_no, format!("unsupported symmetry '{other}'"))),
    };

    let mut data = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });

    let (size_line, size) = data
        .next()
        .ok_or_else(|| parse_error(path, line_no + 1, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| parse_error(path, size_line, format!("bad size line: {e}")))?;

    let parse_value = |tok: Option<&str>, line: usize| -> Result<f64> {
        let tok = tok.ok_or_else(|| parse_error(path, line, "missing value"))?;
        let v = match field {
            Field::Integer => tok
                .parse::<i64>()
                .map(|i| i as f64)
                .map_err(|e| parse_error(path, line, format!("bad integer '{tok}': {e}")))?,
            _ => tok
                .parse::<f64>()
                .map_err(|e| parse_error(path, line, format!("bad number '{tok}': {e}")))?,
        };
        if !v.is_finite() {
            return Err(parse_error(path, line, format!("non-finite value '{tok}'")));
        }
        Ok(v)
    };

    let mut triplets = Vec::new();
    let (rows, cols) = match format {
        Format::Coordinate => {
            let [rows, cols, nnz] = dims[..] else {
                return Err(parse_error(path, size_line, "coordinate size line needs 'rows cols nnz'"));
            };
            if symmetric && rows != cols {
                return Err(parse_error(path, size_line, "symmetric matrix must be square"));
            }
            triplets.reserve(if symmetric { 2 * nnz } else { nnz });
            let mut count = 0;
            for (line, text) in data.by_ref() {
                if count == nnz {
                    return Err(parse_error(path, line, format!("more than {nnz} entries")));
                }
                let mut tok = text.split_whitespace();
                let mut index = |what: &str, bound: usize| -> Result<usize> {
                    let t = tok
                        .next()
                        .ok_or_else(|| parse_error(path, line, format!("missing {what} index")))?;
                    let i: usize = t
                        .parse()
                        .map_err(|e| parse_error(path, line, format!("bad {what} index '{t}': {e}")))?;
                    if i == 0 || i > bound {
                        return Err(parse_error(path, line, format!("{what} index {i} out of range 1..={bound}")));
                    }
                    Ok(i - 1)
                };
                let r = index("row", rows)?;
                let c = index("column", cols)?;
                let v = if field == Field::Pattern {
                    1.0
                } else {
                    parse_value(tok.next(), line)?
                };
                if symmetric && c > r {
                    return Err(parse_error(path, line, "symmetric storage expects the lower triangle"));
                }
                triplets.push((r, c, v));
                if symmetric && r != c {
                    triplets.push((c, r, v));
                }
                count += 1;
            }
            if count != nnz {
                return Err(parse_error(
                    path,
                    size_line,
                    format!("declared {nnz} entries, found {count}"),
                ));
            }
            (rows, cols)
        }
        Format::Array => {
            let [rows, cols] = dims[..] else {
                return Err(parse_error(path, size_line, "array size line needs 'rows cols'"));
            };
            if symmetric && rows != cols {
                return Err(parse_error(path, size_line, "symmetric matrix must be square"));
            }
            // Column-major; symmetric storage lists the lower triangle only.
            let positions: Vec<(usize, usize)> = (0..cols)
                .flat_map(|c| {
                    let start = if symmetric { c } else { 0 };
                    (start..rows).map(move |r| (r, c))
                })
                .collect();
            let mut it = positions.iter();
            let mut last_line = size_line;
            for (line, text) in data.by_ref() {
                last_line = line;
                for tok in text.split_whitespace() {
                    let &(r, c) = it
                        .next()
                        .ok_or_else(|| parse_error(path, line, "too many values"))?;
                    let v = parse_value(Some(tok), line)?;
                    triplets.push((r, c, v));
                    if symmetric && r != c {
                        triplets.push((c, r, v));
                    }
                }
            }
            if it.next().is_some() {
                return Err(parse_error(
                    path,
                    last_line,
                    format!("expected {} values, found fewer", positions.len()),
                ));
            }
            (rows, cols)
        }
    };
    Ok(Entries {
        rows,
        cols,
        triplets,
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })
}

/// Parses Matrix Market text into a dense matrix. `origin` only labels errors.
pub fn parse_dense(text: &str, origin: impl Into<PathBuf>) -> Result<DenseMatrix> {
    let e = parse_entries(text, &origin.into())?;
    let mut m = DenseMatrix::zeros(e.rows, e.cols);
    // Assign first occurrences so that signed zeros survive; sum duplicates.
    let mut seen = vec![false; e.rows * e.cols];
    for (r, c, v) in e.triplets {
        let k = c * e.rows + r;
        if seen[k] {
            m[(r, c)] += v;
        } else {
            m[(r, c)] = v;
            seen[k] = true;
        }
    }
    Ok(m)
}

/// Parses Matrix Market text into a CSR matrix (duplicates summed).
pub fn parse_csr(text: &str, origin: impl Into<PathBuf>) -> Result<CsrMatrix> {
    let e = parse_entries(text, &origin.into())?;
    CsrMatrix::from_triplets(e.rows, e.cols, &e.triplets)
}

pub fn read_dense(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    parse_dense(&read_text(path)?, path)
}

pub fn read_csr(path: impl AsRef<Path>) -> Result<CsrMatrix> {
    let path = path.as_ref();
    parse_csr(&read_text(path)?, path)
}

/// Reads an `n×1` (or `1×n`) matrix as a vector.
pub fn read_vector(path: impl AsRef<Path>) -> Result<Vector> {
    let path = path.as_ref();
    let m = read_dense(path)?;
    if m.ncols() != 1 && m.nrows() != 1 {
        return Err(parse_error(
            path,
            2,
            format!("expected a vector, found a {}x{} matrix", m.nrows(), m.ncols()),
        ));
    }
    Ok(Vector::from_iterator(m.len(), m.iter().copied()))
}

fn number(out: &mut String, v: f64) {
    // 17 significant digits round-trip every finite f64.
    write!(out, "{v:.16e}").expect("writing to a String cannot fail");
}

/// Array format, general symmetry, column-major.
pub fn format_dense(m: &DenseMatrix) -> String {
    let mut out = String::from("%%MatrixMarket matrix array real general\n");
    writeln!(out, "{} {}", m.nrows(), m.ncols()).expect("writing to a String cannot fail");
    for v in m.iter() {
        number(&mut out, *v);
        out.push('\n');
    }
    out
}

/// Coordinate format, general symmetry, 1-based indices.
pub fn format_csr(m: &CsrMatrix) -> String {
    let mut out = String::from("%%MatrixMarket matrix coordinate real general\n");
    writeln!(out, "{} {} {}", m.rows(), m.cols(), m.nnz()).expect("writing to a String cannot fail");
    for (r, c, v) in m.iter() {
        write!(out, "{} {} ", r + 1, c + 1).expect("writing to a String cannot fail");
        number(&mut out, v);
        out.push('\n');
    }
    out
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_dense(path: impl AsRef<Path>, m: &DenseMatrix) -> Result<()> {
    write_text(path.as_ref(), &format_dense(m))
}

pub fn write_csr(path: impl AsRef<Path>, m: &CsrMatrix) -> Result<()> {
    write_text(path.as_ref(), &format_csr(m))
}

/// Writes a dense matrix in coordinate format, keeping only nonzero entries.
pub fn write_sparse(path: impl AsRef<Path>, m: &DenseMatrix) -> Result<()> {
    write_csr(path, &CsrMatrix::from_dense(m))
}

pub fn write_vector(path: impl AsRef<Path>, v: &Vector) -> Result<()> {
    let m = DenseMatrix::from_column_slice(v.len(), 1, v.as_slice());
    write_dense(path, &m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coordinate_symmetric_is_mirrored() {
        let text = "%%MatrixMarket matrix coordinate real symmetric\n% comment\n2 2 2\n1 1 4.0\n2 1 -1\n";
        let m = parse_dense(text, "t.mtx").unwrap();
        assert_eq!(m, DenseMatrix::from_row_slice(2, 2, &[4.0, -1.0, -1.0, 0.0]));
    }

    #[test]
    fn array_is_column_major() {
        let text = "%%MatrixMarket matrix array real general\n2 3\n1\n2\n3\n4\n5\n6\n";
        let m = parse_dense(text, "t.mtx").unwrap();
        assert_eq!(m, DenseMatrix::from_row_slice(2, 3, &[1.0, 3.0, 5.0, 2.0, 4.0, 6.0]));
    }

    #[test]
    fn array_symmetric_lower_triangle() {
        let text = "%%MatrixMarket matrix array real symmetric\n2 2\n2\n-1\n3\n";
        let m = parse_dense(text, "t.mtx").unwrap();
        assert_eq!(m, DenseMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 3.0]));
    }

    #[test]
    fn awkward_values_round_trip_bitwise() {
        let vals = [0.1, 1.0 / 3.0, -2f64.sqrt(), 1e-300, 5e-324, f64::MAX, 0.0, -0.0];
        let m = DenseMatrix::from_column_slice(4, 2, &vals);
        let back = parse_dense(&format_dense(&m), "t.mtx").unwrap();
        for (a, b) in m.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let s = CsrMatrix::from_dense(&m);
        let back = parse_csr(&format_csr(&s), "t.mtx").unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n";
        match parse_dense(text, "bad.mtx") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let text = "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n";
        assert!(matches!(parse_dense(text, "bad.mtx"), Err(Error::Parse { .. })));
        assert!(matches!(parse_dense("", "bad.mtx"), Err(Error::Parse { .. })));
        let text = "%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n";
        assert!(matches!(parse_dense(text, "bad.mtx"), Err(Error::Parse { .. })));
    }

    #[test]
    fn missing_file_is_named() {
        let err = read_dense("/nonexistent/dir/D.mtx").unwrap_err();
        assert!(matches!(err, Error::MissingFile(_)));
        assert!(err.to_string().contains("D.mtx"));
    }
}
