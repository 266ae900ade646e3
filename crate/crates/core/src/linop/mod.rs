//! Matrix-free linear operators.
//!
//! Every solver in the crate touches `K` only through [`LinearOperator::apply`]
//! (or [`LinearOperator::apply_into`]), which validates dimensions and bumps
//! an atomic per-operator MVM counter. Implementors supply the raw product in
//! [`LinearOperator::matvec`].

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{CiqError, Result};

mod dense;
mod image;
mod kernel;
mod lowrank;

pub use dense::{DenseOperator, FnOperator, ScaledIdentity};
pub use image::{build_image_operators, decimation_offset, gaussian_filter, ImageOperators, StencilMatrix};
pub use kernel::{KernelKind, KernelOperator, KernelParams};
pub use lowrank::LowRankPlusDiagOperator;

/// Counts matrix-vector products. Shared-reference safe.
#[derive(Default)]
pub struct MvmCounter(AtomicUsize);

impl MvmCounter {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn increment(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }

    pub fn get(&self) -> usize {
        self.0.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.0.store(0, Ordering::Relaxed);
    }
}

impl Clone for MvmCounter {
    fn clone(&self) -> Self {
        MvmCounter(AtomicUsize::new(self.get()))
    }
}

impl fmt::Debug for MvmCounter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MvmCounter({})", self.get())
    }
}

/// A square operator `K` accessed through matrix-vector products.
pub trait LinearOperator: Send + Sync {
    fn dim(&self) -> usize;

    /// Raw product `out ← K·x`. Does not validate lengths or count.
    fn matvec(&self, x: &[f64], out: &mut [f64]);

    fn mvm_counter(&self) -> &MvmCounter;

    fn is_symmetric(&self) -> bool {
        true
    }

    fn is_positive_definite(&self) -> bool {
        true
    }

    /// Diagonal entries, when cheaply available.
    fn diagonal(&self) -> Option<Vec<f64>> {
        None
    }

    /// Column `j`, when cheaply available.
    fn column(&self, _j: usize) -> Option<Vec<f64>> {
        None
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.dim();
        if x.len() != n {
            return Err(CiqError::DimensionMismatch {
                expected: n,
                actual: x.len(),
            });
        }
        if out.len() != n {
            return Err(CiqError::DimensionMismatch {
                expected: n,
                actual: out.len(),
            });
        }
        self.matvec(x, out);
        self.mvm_counter().increment();
        Ok(())
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.apply_into(x, &mut out)?;
        Ok(out)
    }

    /// `(K + t I) x` using exactly one MVM.
    fn shifted_apply(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        if !(t >= 0.0) {
            return Err(CiqError::NegativeShift(t));
        }
        let mut out = self.apply(x)?;
        for (o, xi) in out.iter_mut().zip(x) {
            *o += t * xi;
        }
        Ok(out)
    }

    fn mvm_count(&self) -> usize {
        self.mvm_counter().get()
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn matvec(&self, x: &[f64], out: &mut [f64]) {
        (**self).matvec(x, out)
    }
    fn mvm_counter(&self) -> &MvmCounter {
        (**self).mvm_counter()
    }
    fn is_symmetric(&self) -> bool {
        (**self).is_symmetric()
    }
    fn is_positive_definite(&self) -> bool {
        (**self).is_positive_definite()
    }
    fn diagonal(&self) -> Option<Vec<f64>> {
        (**self).diagonal()
    }
    fn column(&self, j: usize) -> Option<Vec<f64>> {
        (**self).column(j)
    }
}

/// Assembles the dense matrix (row-major) of an operator column by column.
/// Uses `dim` MVMs; meant for tests and small problems.
pub fn assemble_dense<O: LinearOperator + ?Sized>(op: &O) -> Result<Vec<Vec<f64>>> {
    let n = op.dim();
    let mut rows = vec![vec![0.0; n]; n];
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = op.apply(&e)?;
        e[j] = 0.0;
        for (i, v) in col.into_iter().enumerate() {
            rows[i][j] = v;
        }
    }
    Ok(rows)
}
