//! Seeded randomness for property checks and random test systems.
//!
//! All draws come from SplitMix64 (Steele, Lea and Flood), whose output for a
//! given seed is fixed and easy to reproduce in any language. Uniform doubles
//! take the top 53 bits: `(x >> 11) · 2⁻⁵³`.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::linalg::{DenseMatrix, Vector};

#[derive(Debug, Clone)]
pub struct Rng(SplitMix64);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self(SplitMix64::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `lo..=hi`.
    pub fn range(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.next_u64() % (hi - lo + 1) as u64) as usize
    }

    pub fn vector(&mut self, n: usize) -> Vector {
        Vector::from_fn(n, |_, _| self.uniform(-1.0, 1.0))
    }

    pub fn matrix(&mut self, rows: usize, cols: usize) -> DenseMatrix {
        // Filled column by column so the draw order does not depend on storage.
        let mut m = DenseMatrix::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                m[(i, j)] = self.uniform(-1.0, 1.0);
            }
        }
        m
    }

    /// `GᵀG + shift·I` with uniform `G`: symmetric positive definite.
    pub fn spd(&mut self, n: usize, shift: f64) -> DenseMatrix {
        let g = self.matrix(n, n);
        let m = g.transpose() * &g + DenseMatrix::identity(n, n) * shift;
        (&m + m.transpose()) * 0.5
    }
}
