//! Lanczos tridiagonalization `K Q_J = Q_J T_J + r_J e_Jᵀ` and the extreme
//! eigenvalue estimates that set up the quadrature rule.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{CiqError, Result};
use crate::linop::LinearOperator;
use crate::random;
use crate::vector::{axpy, dot, norm};

/// Default number of Lanczos steps for eigenvalue estimation.
pub const DEFAULT_LANCZOS_ITERS: usize = 10;

const UPPER_SAFETY: f64 = 1.01;
const LOWER_SAFETY: f64 = 0.99;
const INVARIANT_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct LanczosFactorization {
    /// Lanczos vectors `q_1..q_J`, each of length `N`.
    pub basis: Vec<Vec<f64>>,
    /// Diagonal of `T_J`.
    pub alphas: Vec<f64>,
    /// Off-diagonal of `T_J` (length `J - 1`).
    pub betas: Vec<f64>,
    /// `‖r_J‖`.
    pub residual_norm: f64,
    /// True when an invariant subspace was found before `J` steps.
    pub early_stop: bool,
}

impl LanczosFactorization {
    pub fn steps(&self) -> usize {
        self.alphas.len()
    }

    pub fn tridiagonal(&self) -> DMatrix<f64> {
        let j = self.alphas.len();
        let mut t = DMatrix::zeros(j, j);
        for (i, &a) in self.alphas.iter().enumerate() {
            t[(i, i)] = a;
        }
        for (i, &b) in self.betas.iter().enumerate() {
            t[(i, i + 1)] = b;
            t[(i + 1, i)] = b;
        }
        t
    }

    /// Eigenvalues of `T_J` in ascending order.
    pub fn ritz_values(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.tridiagonal())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

/// Runs `steps` Lanczos iterations from `start`, one MVM each. Stops early
/// when the next off-diagonal falls below `1e-12` times the running estimate
/// of `‖T‖`, which signals an invariant subspace.
pub fn lanczos_factorize<O: LinearOperator + ?Sized>(
    op: &O,
    start: &[f64],
    steps: usize,
    reorthogonalize: bool,
) -> Result<LanczosFactorization> {
    let n = op.dim();
    if start.len() != n {
        return Err(CiqError::DimensionMismatch {
            expected: n,
            actual: start.len(),
        });
    }
    if steps == 0 || steps > n {
        return Err(CiqError::invalid(format!(
            "Lanczos steps must be in 1..={n}, got {steps}"
        )));
    }
    let s = norm(start);
    if s == 0.0 || !s.is_finite() {
        return Err(CiqError::ZeroVector);
    }

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(steps);
    basis.push(start.iter().map(|v| v / s).collect());
    let mut alphas = Vec::with_capacity(steps);
    let mut betas = Vec::with_capacity(steps.saturating_sub(1));
    let mut w = vec![0.0; n];
    let mut beta_prev = 0.0;
    let mut t_norm = 0.0f64;
    let mut residual_norm = 0.0;
    let mut early_stop = false;

    for j in 0..steps {
        op.apply_into(&basis[j], &mut w)?;
        let alpha = dot(&basis[j], &w);
        axpy(-alpha, &basis[j], &mut w);
        if j > 0 {
            axpy(-beta_prev, &basis[j - 1], &mut w);
        }
        if reorthogonalize {
            for _ in 0..2 {
                for q in &basis {
                    let h = dot(q, &w);
                    axpy(-h, q, &mut w);
                }
            }
        }
        alphas.push(alpha);
        let beta = norm(&w);
        t_norm = t_norm.max(alpha.abs() + beta + beta_prev);
        residual_norm = beta;
        if j + 1 == steps {
            break;
        }
        if beta <= INVARIANT_EPS * t_norm {
            early_stop = true;
            break;
        }
        betas.push(beta);
        basis.push(w.iter().map(|v| v / beta).collect());
        beta_prev = beta;
    }

    Ok(LanczosFactorization {
        basis,
        alphas,
        betas,
        residual_norm,
        early_stop,
    })
}

/// Bounds on the spectrum of an SPD operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectrumEstimate {
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl SpectrumEstimate {
    pub fn new(lambda_min: f64, lambda_max: f64) -> Result<Self> {
        if !(lambda_min > 0.0 && lambda_min.is_finite()) {
            return Err(CiqError::Domain {
                what: "lambda_min",
                value: lambda_min,
                domain: "(0, inf)",
            });
        }
        if !(lambda_max >= lambda_min && lambda_max.is_finite()) {
            return Err(CiqError::Domain {
                what: "lambda_max",
                value: lambda_max,
                domain: "[lambda_min, inf)",
            });
        }
        Ok(Self {
            lambda_min,
            lambda_max,
        })
    }

    /// Widens extreme Ritz values by the safety factors: `1.01·ritz_max` and
    /// `0.99·ritz_min`, the latter clamped below at `1e-12·ritz_max`.
    pub fn from_ritz(ritz_min: f64, ritz_max: f64) -> Result<Self> {
        if !(ritz_max > 0.0) {
            return Err(CiqError::NotPositiveDefinite {
                index: 0,
                value: ritz_max,
            });
        }
        let lambda_max = UPPER_SAFETY * ritz_max;
        let lambda_min = (LOWER_SAFETY * ritz_min).max(1e-12 * ritz_max);
        Self::new(lambda_min, lambda_max)
    }

    pub fn kappa(&self) -> f64 {
        self.lambda_max / self.lambda_min
    }
}

/// Extreme eigenvalue estimate from `iters` Lanczos steps (fully
/// reorthogonalized) started at a seeded random unit vector. Uses exactly
/// `min(iters, N)` MVMs unless an invariant subspace is hit first.
pub fn estimate_extreme_eigenvalues<O: LinearOperator + ?Sized>(
    op: &O,
    iters: usize,
    seed: u64,
) -> Result<SpectrumEstimate> {
    let (ritz_min, ritz_max) = ritz_extremes(op, iters, seed)?;
    SpectrumEstimate::from_ritz(ritz_min, ritz_max)
}

/// The raw extreme Ritz values behind [`estimate_extreme_eigenvalues`].
pub fn ritz_extremes<O: LinearOperator + ?Sized>(op: &O, iters: usize, seed: u64) -> Result<(f64, f64)> {
    if iters < 2 {
        return Err(CiqError::invalid(format!(
            "eigenvalue estimation needs at least 2 Lanczos steps, got {iters}"
        )));
    }
    let n = op.dim();
    let mut rng = random::rng(seed);
    let start = random::standard_normal_vec(&mut rng, n);
    let fact = lanczos_factorize(op, &start, iters.min(n), true)?;
    let ritz = fact.ritz_values();
    Ok((ritz[0], ritz[ritz.len() - 1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::{DenseOperator, ScaledIdentity};

    #[test]
    fn identity_single_step() {
        let op = ScaledIdentity::identity(5);
        let f = lanczos_factorize(&op, &[1.0, 2.0, 0.0, 0.0, 1.0], 1, false).unwrap();
        assert_eq!(f.alphas.len(), 1);
        assert!((f.alphas[0] - 1.0).abs() < 1e-15);
        assert!(f.residual_norm < 1e-15);
        assert_eq!(op.mvm_count(), 1);
    }

    #[test]
    fn diag_three_exact() {
        let op = DenseOperator::diag(&[1.0, 2.0, 3.0]).unwrap();
        let f = lanczos_factorize(&op, &[1.0, 1.0, 1.0], 3, true).unwrap();
        let r = f.ritz_values();
        for (a, b) in r.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_start_rejected() {
        let op = ScaledIdentity::identity(3);
        assert!(matches!(
            lanczos_factorize(&op, &[0.0; 3], 2, false),
            Err(CiqError::ZeroVector)
        ));
    }

    #[test]
    fn scaled_identity_safety_factors() {
        let op = ScaledIdentity::new(20, 5.0);
        let s = estimate_extreme_eigenvalues(&op, 10, 0).unwrap();
        assert!((s.lambda_min - 4.95).abs() < 1e-12);
        assert!((s.lambda_max - 5.05).abs() < 1e-12);
        // Invariant subspace after one step.
        assert_eq!(op.mvm_count(), 1);
    }

    #[test]
    fn too_few_iters() {
        let op = ScaledIdentity::identity(3);
        assert!(estimate_extreme_eigenvalues(&op, 1, 0).is_err());
    }

    #[test]
    fn uses_exactly_iters_mvms() {
        let d: Vec<f64> = (1..=50).map(|i| i as f64).collect();
        let op = DenseOperator::diag(&d).unwrap();
        estimate_extreme_eigenvalues(&op, 12, 3).unwrap();
        assert_eq!(op.mvm_count(), 12);
    }
}
