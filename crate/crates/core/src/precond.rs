//! Preconditioners `P ≈ K` with cheap `P^{-1}`, `P^{1/2}` and `P^{-1/2}`.
//!
//! The main one is `P = L̄L̄ᵀ + σ²I` from a partial pivoted Cholesky
//! factorization of `K`. With the thin SVD `L̄ = U S Wᵀ`,
//! `P^{±1/2} v = U (S² + σ²)^{±1/2} Uᵀ v + σ^{±1} (v - U Uᵀ v)`, which is exact
//! and costs `O(NR)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::ciq::{invsqrt_apply, sqrt_apply};
use crate::error::{CiqError, Result};
use crate::lanczos::SpectrumEstimate;
use crate::linop::{LinearOperator, MvmCounter};
use crate::msminres::{minres, SolverConfig};

const PIVOT_TOL: f64 = 1e-12;

/// Symmetric positive-definite `P` with the four actions the preconditioned
/// drivers need. Inputs must have length [`dim`](Preconditioner::dim).
pub trait Preconditioner: Send + Sync {
    fn dim(&self) -> usize;
    fn apply(&self, v: &[f64]) -> Vec<f64>;
    fn apply_inv(&self, v: &[f64]) -> Vec<f64>;
    fn apply_sqrt(&self, v: &[f64]) -> Vec<f64>;
    fn apply_inv_sqrt(&self, v: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy)]
pub struct IdentityPreconditioner {
    pub dim: usize,
}

impl IdentityPreconditioner {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl Preconditioner for IdentityPreconditioner {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.to_vec()
    }
    fn apply_inv(&self, v: &[f64]) -> Vec<f64> {
        v.to_vec()
    }
    fn apply_sqrt(&self, v: &[f64]) -> Vec<f64> {
        v.to_vec()
    }
    fn apply_inv_sqrt(&self, v: &[f64]) -> Vec<f64> {
        v.to_vec()
    }
}

/// Output of [`build_pivoted_cholesky`].
#[derive(Debug, Clone)]
pub struct PivotedCholesky {
    /// `N × R` factor `L̄` with `L̄L̄ᵀ ≈ K`.
    pub factor: DMatrix<f64>,
    pub pivots: Vec<usize>,
    /// `trace(K - L̄_r L̄_rᵀ)` for `r = 0..=R`.
    pub trace_history: Vec<f64>,
    /// Diagonal of `K - L̄L̄ᵀ`.
    pub residual_diagonal: Vec<f64>,
}

impl PivotedCholesky {
    pub fn rank(&self) -> usize {
        self.factor.ncols()
    }
}

/// Greedy partial pivoted Cholesky: each step pivots on the largest remaining
/// diagonal residual. Stops at `rank` columns or once that residual drops
/// below `1e-12` times the initial maximum. Needs diagonal and column access.
pub fn build_pivoted_cholesky<O: LinearOperator + ?Sized>(op: &O, rank: usize) -> Result<PivotedCholesky> {
    let n = op.dim();
    let mut d = op
        .diagonal()
        .ok_or(CiqError::UnsupportedOperator("pivoted Cholesky needs the operator diagonal"))?;
    let max0 = d.iter().cloned().fold(0.0f64, f64::max);
    let rank = rank.min(n);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(rank);
    let mut pivots = Vec::with_capacity(rank);
    let mut trace_history = vec![d.iter().map(|v| v.max(0.0)).sum()];

    while cols.len() < rank {
        let (i, &dmax) = d
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty diagonal");
        if !(dmax > PIVOT_TOL * max0) {
            break;
        }
        let mut l = op
            .column(i)
            .ok_or(CiqError::UnsupportedOperator("pivoted Cholesky needs column access"))?;
        for c in &cols {
            let ci = c[i];
            for (lj, cj) in l.iter_mut().zip(c) {
                *lj -= ci * cj;
            }
        }
        let s = dmax.sqrt();
        for v in l.iter_mut() {
            *v /= s;
        }
        for (dj, lj) in d.iter_mut().zip(&l) {
            *dj -= lj * lj;
        }
        d[i] = 0.0;
        for &p in &pivots {
            d[p] = 0.0;
        }
        pivots.push(i);
        cols.push(l);
        trace_history.push(d.iter().map(|v| v.max(0.0)).sum());
    }

    let r = cols.len();
    let factor = DMatrix::from_fn(n, r, |i, j| cols[j][i]);
    Ok(PivotedCholesky {
        factor,
        pivots,
        trace_history,
        residual_diagonal: d,
    })
}

/// Default pivoted-Cholesky rank: `N/8`, at least 1 and at most 64.
pub fn default_rank(n: usize) -> usize {
    (n / 8).clamp(1, 64)
}

/// `P = L̄L̄ᵀ + σ²I` with Woodbury inverse and closed-form half powers.
#[derive(Debug, Clone)]
pub struct PivCholPreconditioner {
    factor: DMatrix<f64>,
    sigma2: f64,
    u: DMatrix<f64>,
    singular_values: Vec<f64>,
    capacitance: Cholesky<f64, Dyn>,
}

impl PivCholPreconditioner {
    pub fn new(factor: DMatrix<f64>, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(CiqError::Domain {
                what: "sigma2",
                value: sigma2,
                domain: "(0, inf)",
            });
        }
        let r = factor.ncols();
        let mut cap = factor.tr_mul(&factor);
        for i in 0..r {
            cap[(i, i)] += sigma2;
        }
        let capacitance = Cholesky::new(cap)
            .ok_or_else(|| CiqError::invalid("Woodbury capacitance matrix is not positive definite"))?;
        let (u, singular_values) = if r == 0 {
            (DMatrix::zeros(factor.nrows(), 0), Vec::new())
        } else {
            let svd = factor.clone().svd(true, false);
            let u = svd.u.expect("requested U");
            (u, svd.singular_values.iter().copied().collect())
        };
        Ok(Self {
            factor,
            sigma2,
            u,
            singular_values,
            capacitance,
        })
    }

    /// Pivoted Cholesky of rank `rank` on `op`, with `σ²` either given or set
    /// to the mean residual diagonal `trace(K - L̄L̄ᵀ)/N`.
    pub fn from_operator<O: LinearOperator + ?Sized>(op: &O, rank: usize, sigma2: Option<f64>) -> Result<Self> {
        let pc = build_pivoted_cholesky(op, rank)?;
        let sigma2 = match sigma2 {
            Some(s) => s,
            None => {
                let n = op.dim() as f64;
                let mean = pc.trace_history.last().copied().unwrap_or(0.0) / n;
                let floor = 1e-12 * pc.trace_history[0] / n;
                mean.max(floor).max(f64::MIN_POSITIVE)
            }
        };
        Self::new(pc.factor, sigma2)
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn rank(&self) -> usize {
        self.factor.ncols()
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    fn half_power(&self, v: &[f64], sign: f64) -> Vec<f64> {
        let vv = DVector::from_column_slice(v);
        let mut coeffs = self.u.tr_mul(&vv);
        let proj = &self.u * &coeffs;
        let sig = self.sigma2.powf(0.5 * sign);
        for (c, s) in coeffs.iter_mut().zip(&self.singular_values) {
            *c *= (s * s + self.sigma2).powf(0.5 * sign);
        }
        let low = &self.u * coeffs;
        v.iter()
            .zip(low.iter().zip(proj.iter()))
            .map(|(vi, (li, pi))| li + sig * (vi - pi))
            .collect()
    }
}

impl Preconditioner for PivCholPreconditioner {
    fn dim(&self) -> usize {
        self.factor.nrows()
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let vv = DVector::from_column_slice(v);
        let y = &self.factor * self.factor.tr_mul(&vv);
        y.iter().zip(v).map(|(a, b)| a + self.sigma2 * b).collect()
    }

    fn apply_inv(&self, v: &[f64]) -> Vec<f64> {
        let vv = DVector::from_column_slice(v);
        let inner = self.capacitance.solve(&self.factor.tr_mul(&vv));
        let corr = &self.factor * inner;
        v.iter().zip(corr.iter()).map(|(a, c)| (a - c) / self.sigma2).collect()
    }

    fn apply_sqrt(&self, v: &[f64]) -> Vec<f64> {
        self.half_power(v, 1.0)
    }

    fn apply_inv_sqrt(&self, v: &[f64]) -> Vec<f64> {
        self.half_power(v, -1.0)
    }
}

/// Fallback for a generic SPD `P` given only by MVMs: half powers through
/// CIQ and the inverse through MINRES. Approximate to the solver tolerance.
pub struct CiqPreconditioner<P: LinearOperator> {
    op: P,
    q: usize,
    cfg: SolverConfig,
    spectrum: Option<SpectrumEstimate>,
}

impl<P: LinearOperator> CiqPreconditioner<P> {
    pub fn new(op: P, q: usize, cfg: SolverConfig, spectrum: Option<SpectrumEstimate>) -> Self {
        Self { op, q, cfg, spectrum }
    }
}

impl<P: LinearOperator> Preconditioner for CiqPreconditioner<P> {
    fn dim(&self) -> usize {
        self.op.dim()
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.op.apply(v).expect("preconditioner input length")
    }

    fn apply_inv(&self, v: &[f64]) -> Vec<f64> {
        minres(&self.op, v, 0.0, &self.cfg)
            .expect("preconditioner input length")
            .solution
    }

    fn apply_sqrt(&self, v: &[f64]) -> Vec<f64> {
        sqrt_apply(&self.op, v, self.q, &self.cfg, self.spectrum)
            .expect("preconditioner input length")
            .result
    }

    fn apply_inv_sqrt(&self, v: &[f64]) -> Vec<f64> {
        invsqrt_apply(&self.op, v, self.q, &self.cfg, self.spectrum)
            .expect("preconditioner input length")
            .result
    }
}

/// `M = P^{-1/2} K P^{-1/2}`. Each product costs one MVM with `K` (counted on
/// `K`'s own counter as well) plus two `P^{-1/2}` applications.
pub struct PreconditionedOperator<'a, O: LinearOperator + ?Sized, P: Preconditioner + ?Sized> {
    op: &'a O,
    precond: &'a P,
    counter: MvmCounter,
}

impl<'a, O: LinearOperator + ?Sized, P: Preconditioner + ?Sized> PreconditionedOperator<'a, O, P> {
    pub fn new(op: &'a O, precond: &'a P) -> Result<Self> {
        if op.dim() != precond.dim() {
            return Err(CiqError::DimensionMismatch {
                expected: op.dim(),
                actual: precond.dim(),
            });
        }
        Ok(Self {
            op,
            precond,
            counter: MvmCounter::new(),
        })
    }
}

impl<O: LinearOperator + ?Sized, P: Preconditioner + ?Sized> LinearOperator for PreconditionedOperator<'_, O, P> {
    fn dim(&self) -> usize {
        self.op.dim()
    }

    fn matvec(&self, x: &[f64], out: &mut [f64]) {
        let y = self.precond.apply_inv_sqrt(x);
        let mut ky = vec![0.0; y.len()];
        self.op.apply_into(&y, &mut ky).expect("dimensions checked at construction");
        out.copy_from_slice(&self.precond.apply_inv_sqrt(&ky));
    }

    fn mvm_counter(&self) -> &MvmCounter {
        &self.counter
    }

    fn is_positive_definite(&self) -> bool {
        self.op.is_positive_definite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_rank_values() {
        assert_eq!(default_rank(4), 1);
        assert_eq!(default_rank(100), 12);
        assert_eq!(default_rank(10_000), 64);
    }
    use crate::linop::{DenseOperator, FnOperator};
    use crate::oracle::{random_spd, DenseSpectralFactorization, MatrixPower};
    use crate::vector::relative_error;

    fn random_factor(n: usize, r: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = crate::random::rng(seed);
        DMatrix::from_vec(n, r, crate::random::standard_normal_vec(&mut rng, n * r))
    }

    #[test]
    fn zero_factor_is_scalar() {
        let p = PivCholPreconditioner::new(DMatrix::zeros(4, 2), 4.0).unwrap();
        let v = [1.0, -2.0, 3.0, 0.5];
        for (a, b) in p.apply_inv(&v).iter().zip(v) {
            assert!((a - b / 4.0).abs() < 1e-15);
        }
        for (a, b) in p.apply_sqrt(&v).iter().zip(v) {
            assert!((a - 2.0 * b).abs() < 1e-14);
        }
        for (a, b) in p.apply_inv_sqrt(&v).iter().zip(v) {
            assert!((a - 0.5 * b).abs() < 1e-14);
        }
    }

    #[test]
    fn woodbury_and_half_powers_match_dense() {
        let (n, r) = (64, 8);
        let f = random_factor(n, r, 11);
        let p = PivCholPreconditioner::new(f.clone(), 0.3).unwrap();
        let mut dense = &f * f.transpose();
        for i in 0..n {
            dense[(i, i)] += 0.3;
        }
        let fact = DenseSpectralFactorization::new(&dense).unwrap();
        let v: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let inv = fact.apply_power(&v, MatrixPower::Inverse).unwrap();
        let sqrt = fact.apply_power(&v, MatrixPower::Sqrt).unwrap();
        assert!(relative_error(&p.apply_inv(&v), &inv) < 1e-10);
        assert!(relative_error(&p.apply_sqrt(&v), &sqrt) < 1e-10);
        assert!(relative_error(&p.apply_inv(&p.apply(&v)), &v) < 1e-10);
        assert!(relative_error(&p.apply_sqrt(&p.apply_sqrt(&v)), &p.apply(&v)) < 1e-10);
        assert!(relative_error(&p.apply_inv_sqrt(&p.apply_sqrt(&v)), &v) < 1e-10);
    }

    #[test]
    fn rank_one_exact() {
        let u = [1.0, 2.0, -1.0, 0.5];
        let rows: Vec<Vec<f64>> = u.iter().map(|a| u.iter().map(|b| a * b).collect()).collect();
        let op = DenseOperator::from_rows(&rows).unwrap();
        let pc = build_pivoted_cholesky(&op, 1).unwrap();
        assert!(pc.residual_diagonal.iter().all(|d| d.abs() <= 1e-12));
    }

    #[test]
    fn full_rank_reconstructs() {
        let op = random_spd(10, 0.2, 3).unwrap();
        let pc = build_pivoted_cholesky(&op, 10).unwrap();
        let rec = &pc.factor * pc.factor.transpose();
        assert!((rec - op.to_matrix()).amax() < 1e-8);
        assert!(pc.trace_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn mvm_only_operator_unsupported() {
        let op = FnOperator::new(3, |x: &[f64], y: &mut [f64]| y.copy_from_slice(x));
        assert!(matches!(
            build_pivoted_cholesky(&op, 2),
            Err(CiqError::UnsupportedOperator(_))
        ));
    }
}
