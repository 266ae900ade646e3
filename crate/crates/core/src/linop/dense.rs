use nalgebra::DMatrix;

use super::{LinearOperator, MvmCounter};
use crate::error::{CiqError, Result};

/// `scale · I`
#[derive(Debug, Clone)]
pub struct ScaledIdentity {
    dim: usize,
    scale: f64,
    counter: MvmCounter,
}

impl ScaledIdentity {
    pub fn new(dim: usize, scale: f64) -> Self {
        Self {
            dim,
            scale,
            counter: MvmCounter::new(),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(dim, 1.0)
    }
}

impl LinearOperator for ScaledIdentity {
    fn dim(&self) -> usize {
        self.dim
    }

    fn matvec(&self, x: &[f64], out: &mut [f64]) {
        for (o, xi) in out.iter_mut().zip(x) {
            *o = self.scale * xi;
        }
    }

    fn mvm_counter(&self) -> &MvmCounter {
        &self.counter
    }

    fn is_positive_definite(&self) -> bool {
        self.scale > 0.0
    }

    fn diagonal(&self) -> Option<Vec<f64>> {
        Some(vec![self.scale; self.dim])
    }

    fn column(&self, j: usize) -> Option<Vec<f64>> {
        let mut c = vec![0.0; self.dim];
        c[j] = self.scale;
        Some(c)
    }
}

/// Explicit symmetric matrix, stored row-major.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    n: usize,
    entries: Vec<f64>,
    counter: MvmCounter,
}

impl DenseOperator {
    /// Builds from rows. Asymmetry above `1e-10·max|K_ij|` is rejected;
    /// smaller rounding asymmetry is averaged away so the stored matrix is
    /// exactly symmetric.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(CiqError::invalid("empty matrix"));
        }
        let mut entries = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(CiqError::invalid(format!(
                    "matrix is not square: row of length {} in a {n}-row matrix",
                    row.len()
                )));
            }
            entries.extend_from_slice(row);
        }
        Self::from_row_major(n, entries)
    }

    pub fn from_row_major(n: usize, mut entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(CiqError::invalid(format!(
                "expected {} entries for a {n}x{n} matrix, got {}",
                n * n,
                entries.len()
            )));
        }
        if let Some(bad) = entries.iter().position(|v| !v.is_finite()) {
            return Err(CiqError::invalid(format!(
                "non-finite entry at ({}, {})",
                bad / n,
                bad % n
            )));
        }
        let scale = entries.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = 1e-10 * scale;
        for i in 0..n {
            for j in (i + 1)..n {
                let a = entries[i * n + j];
                let b = entries[j * n + i];
                let diff = (a - b).abs();
                if diff > tol {
                    return Err(CiqError::NotSymmetric { i, j, diff });
                }
                let avg = 0.5 * (a + b);
                entries[i * n + j] = avg;
                entries[j * n + i] = avg;
            }
        }
        Ok(Self {
            n,
            entries,
            counter: MvmCounter::new(),
        })
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(CiqError::invalid(format!(
                "matrix is not square: {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let n = m.nrows();
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                entries.push(m[(i, j)]);
            }
        }
        Self::from_row_major(n, entries)
    }

    pub fn diag(values: &[f64]) -> Result<Self> {
        let n = values.len();
        let mut entries = vec![0.0; n * n];
        for (i, v) in values.iter().enumerate() {
            entries[i * n + i] = *v;
        }
        Self::from_row_major(n, entries)
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.entries)
    }

    pub fn row_major(&self) -> &[f64] {
        &self.entries
    }
}

impl LinearOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.n
    }

    fn matvec(&self, x: &[f64], out: &mut [f64]) {
        for (row, o) in self.entries.chunks_exact(self.n).zip(out.iter_mut()) {
            *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    fn mvm_counter(&self) -> &MvmCounter {
        &self.counter
    }

    fn diagonal(&self) -> Option<Vec<f64>> {
        Some((0..self.n).map(|i| self.entry(i, i)).collect())
    }

    fn column(&self, j: usize) -> Option<Vec<f64>> {
        // symmetric: column j == row j
        Some(self.entries[j * self.n..(j + 1) * self.n].to_vec())
    }
}

/// An operator defined only by a closure. It exposes no diagonal or column
/// access, which makes it the canonical "MVM-only" operator.
pub struct FnOperator<F> {
    dim: usize,
    f: F,
    symmetric: bool,
    positive_definite: bool,
    counter: MvmCounter,
}

impl<F> FnOperator<F>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self {
            dim,
            f,
            symmetric: true,
            positive_definite: true,
            counter: MvmCounter::new(),
        }
    }

    /// Overrides the structural flags (both default to true).
    pub fn with_flags(mut self, symmetric: bool, positive_definite: bool) -> Self {
        self.symmetric = symmetric;
        self.positive_definite = positive_definite;
        self
    }
}

impl<F> LinearOperator for FnOperator<F>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn matvec(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }

    fn mvm_counter(&self) -> &MvmCounter {
        &self.counter
    }

    fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    fn is_positive_definite(&self) -> bool {
        self.positive_definite
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_apply() {
        let op = DenseOperator::from_rows(&[vec![2.0, 0.0], vec![0.0, 5.0]]).unwrap();
        assert_eq!(op.apply(&[1.0, 1.0]).unwrap(), vec![2.0, 5.0]);
        assert_eq!(op.shifted_apply(3.0, &[1.0, 1.0]).unwrap(), vec![5.0, 8.0]);
    }

    #[test]
    fn asymmetric_rejected() {
        let err = DenseOperator::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap_err();
        assert!(matches!(err, CiqError::NotSymmetric { i: 0, j: 1, .. }));
    }

    #[test]
    fn rounding_asymmetry_is_symmetrized() {
        let op =
            DenseOperator::from_rows(&[vec![1.0, 0.5 + 1e-15], vec![0.5, 1.0]]).unwrap();
        assert_eq!(op.entry(0, 1), op.entry(1, 0));
    }

    #[test]
    fn non_square_rejected() {
        assert!(DenseOperator::from_rows(&[vec![1.0, 2.0]]).is_err());
    }
}
