//! Conjugate gradients with optional Jacobi (diagonal) preconditioning.

use crate::error::{CiqError, Result};
use crate::linop::LinearOperator;
use crate::vector::{axpy, dot, norm};

#[derive(Debug, Clone)]
pub struct CgResult {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// `‖b - K x‖ / ‖b‖` from the recurrence.
    pub relative_residual: f64,
    pub converged: bool,
}

/// Solves `K x = b` to relative residual `tol`. When `jacobi` is set the
/// preconditioner is `diag(K)`, taken from the operator.
pub fn conjugate_gradient<O: LinearOperator + ?Sized>(
    op: &O,
    b: &[f64],
    tol: f64,
    max_iters: usize,
    jacobi: bool,
) -> Result<CgResult> {
    let n = op.dim();
    if b.len() != n {
        return Err(CiqError::DimensionMismatch {
            expected: n,
            actual: b.len(),
        });
    }
    let inv_diag = if jacobi {
        let d = op
            .diagonal()
            .ok_or(CiqError::UnsupportedOperator("Jacobi preconditioning needs the diagonal"))?;
        if let Some((index, &value)) = d.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
            return Err(CiqError::NotPositiveDefinite { index, value });
        }
        Some(d.iter().map(|v| 1.0 / v).collect::<Vec<_>>())
    } else {
        None
    };
    let precond = |r: &[f64]| -> Vec<f64> {
        match &inv_diag {
            Some(d) => r.iter().zip(d).map(|(a, b)| a * b).collect(),
            None => r.to_vec(),
        }
    };

    let bn = norm(b);
    let mut x = vec![0.0; n];
    if bn == 0.0 {
        return Ok(CgResult {
            solution: x,
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        });
    }
    let mut r = b.to_vec();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut rel = 1.0;
    for it in 1..=max_iters {
        op.apply_into(&p, &mut ap)?;
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(CiqError::NotPositiveDefinite { index: it, value: pap });
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        rel = norm(&r) / bn;
        if rel <= tol {
            return Ok(CgResult {
                solution: x,
                iterations: it,
                relative_residual: rel,
                converged: true,
            });
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    Ok(CgResult {
        solution: x,
        iterations: max_iters,
        relative_residual: rel,
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::random_spd;

    #[test]
    fn solves_spd_system() {
        let op = random_spd(25, 0.5, 1).unwrap();
        let b: Vec<f64> = (0..25).map(|i| i as f64).collect();
        for jacobi in [false, true] {
            let r = conjugate_gradient(&op, &b, 1e-10, 200, jacobi).unwrap();
            assert!(r.converged);
            let kx = op.apply(&r.solution).unwrap();
            assert!(crate::vector::relative_error(&kx, &b) < 1e-9);
        }
    }
}
