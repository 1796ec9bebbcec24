use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, Vector};

/// Compressed sparse row matrix.
///
/// Column indices are strictly increasing within each row and row offsets are
/// non-decreasing; both are enforced by every constructor.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn try_new(
        rows: usize,
        cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != rows + 1 {
            return Err(Error::DimensionMismatch {
                context: "csr row offsets",
                expected: rows + 1,
                found: row_offsets.len(),
            });
        }
        if col_indices.len() != values.len() {
            return Err(Error::DimensionMismatch {
                context: "csr values",
                expected: col_indices.len(),
                found: values.len(),
            });
        }
        if row_offsets[0] != 0 || row_offsets[rows] != values.len() {
            return Err(Error::InvalidParameter(
                "csr row offsets must start at 0 and end at nnz".into(),
            ));
        }
        for r in 0..rows {
            let (lo, hi) = (row_offsets[r], row_offsets[r + 1]);
            if lo > hi {
                return Err(Error::InvalidParameter(format!(
                    "csr row offsets decrease at row {r}"
                )));
            }
            let row = &col_indices[lo..hi];
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidParameter(format!(
                    "csr column indices not strictly increasing in row {r}"
                )));
            }
            if row.last().is_some_and(|&c| c >= cols) {
                return Err(Error::InvalidParameter(format!(
                    "csr column index out of range in row {r}"
                )));
            }
        }
        Ok(Self {
            rows,
            cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        if let Some(&(r, c, _)) = sorted.iter().find(|&&(r, c, _)| r >= rows || c >= cols) {
            return Err(Error::InvalidParameter(format!(
                "triplet ({r}, {c}) outside a {rows}x{cols} matrix"
            )));
        }
        sorted.sort_by_key(|&(r, c, _)| (r, c));

        let mut row_offsets = vec![0usize; rows + 1];
        let mut col_indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            col_indices.push(c);
            values.push(v);
            row_offsets[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..rows {
            row_offsets[r + 1] += row_offsets[r];
        }
        Self::try_new(rows, cols, row_offsets, col_indices, values)
    }

    /// Keeps every entry that is not exactly zero.
    pub fn from_dense(m: &DenseMatrix) -> Self {
        let mut row_offsets = Vec::with_capacity(m.nrows() + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v != 0.0 {
                    col_indices.push(j);
                    values.push(v);
                }
            }
            row_offsets.push(values.len());
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            row_offsets,
            col_indices,
            values,
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.rows, self.cols);
        for (r, c, v) in self.iter() {
            m[(r, c)] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterates over stored entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| {
            (self.row_offsets[r]..self.row_offsets[r + 1])
                .map(move |k| (r, self.col_indices[k], self.values[k]))
        })
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.rows.min(self.cols)];
        for (r, c, v) in self.iter() {
            if r == c {
                d[r] = v;
            }
        }
        d
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        for (r, yr) in y.iter_mut().enumerate() {
            let (lo, hi) = (self.row_offsets[r], self.row_offsets[r + 1]);
            *yr = self.col_indices[lo..hi]
                .iter()
                .zip(&self.values[lo..hi])
                .map(|(&c, &v)| v * x[c])
                .sum();
        }
    }

    pub fn mul_vec(&self, x: &Vector) -> Result<Vector> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                context: "csr matrix-vector product",
                expected: self.cols,
                found: x.len(),
            });
        }
        let mut y = Vector::zeros(self.rows);
        self.mul_vec_into(x.as_slice(), y.as_mut_slice());
        Ok(y)
    }
}
