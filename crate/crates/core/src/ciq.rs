//! `K^{1/2} b` and `K^{-1/2} b` drivers.
//!
//! `K^{-1/2} b ≈ Σ_q w_q (t_q I + K)^{-1} b` and `K^{1/2} b ≈ K Σ_q w_q (t_q I + K)^{-1} b`,
//! with every shifted solve coming out of one [`msminres`] call.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{CiqError, Result};
use crate::lanczos::{estimate_extreme_eigenvalues, SpectrumEstimate, DEFAULT_LANCZOS_ITERS};
use crate::linop::LinearOperator;
use crate::msminres::{msminres, ShiftedSolveBundle, SolverConfig};
use crate::precond::{PreconditionedOperator, Preconditioner};
use crate::quadrature::{build_rule, QuadratureRule};
use crate::vector::axpy;

/// Seed for the Lanczos start vector when the driver estimates the spectrum.
pub const SPECTRUM_SEED: u64 = 0x5eed;

#[derive(Debug, Clone)]
pub struct CiqOutput {
    pub result: Vec<f64>,
    pub rule: QuadratureRule,
    pub bundle: ShiftedSolveBundle,
    /// Every shift met the solver tolerance.
    pub converged: bool,
    /// MVMs spent estimating the spectrum (zero when it was supplied).
    pub spectrum_mvms: usize,
}

impl CiqOutput {
    /// Iterations `J` of the multi-shift solve.
    pub fn iterations(&self) -> usize {
        self.bundle.iterations
    }
}

fn require_spd<O: LinearOperator + ?Sized>(op: &O) -> Result<()> {
    if !op.is_symmetric() || !op.is_positive_definite() {
        return Err(CiqError::UnsupportedOperator(
            "square roots need an operator flagged symmetric positive definite",
        ));
    }
    Ok(())
}

/// Returns the supplied spectrum or a Lanczos estimate, with the MVMs spent.
pub fn resolve_spectrum<O: LinearOperator + ?Sized>(
    op: &O,
    spectrum: Option<SpectrumEstimate>,
) -> Result<(SpectrumEstimate, usize)> {
    match spectrum {
        Some(s) => Ok((s, 0)),
        None => {
            let before = op.mvm_count();
            let s = estimate_extreme_eigenvalues(op, DEFAULT_LANCZOS_ITERS.max(2), SPECTRUM_SEED)?;
            Ok((s, op.mvm_count() - before))
        }
    }
}

fn solve<O: LinearOperator + ?Sized>(
    op: &O,
    b: &[f64],
    q: usize,
    cfg: &SolverConfig,
    spectrum: Option<SpectrumEstimate>,
) -> Result<CiqOutput> {
    require_spd(op)?;
    if b.len() != op.dim() {
        return Err(CiqError::DimensionMismatch {
            expected: op.dim(),
            actual: b.len(),
        });
    }
    let (spectrum, spectrum_mvms) = resolve_spectrum(op, spectrum)?;
    let rule = build_rule(spectrum, q)?;
    let bundle = msminres(op, b, &rule.shifts, cfg)?;
    let result = bundle.combine(&rule.weights);
    Ok(CiqOutput {
        result,
        converged: bundle.all_converged(),
        rule,
        bundle,
        spectrum_mvms,
    })
}

/// `K^{-1/2} b`. Estimates the spectrum with Lanczos when none is given.
pub fn invsqrt_apply<O: LinearOperator + ?Sized>(
    op: &O,
    b: &[f64],
    q: usize,
    cfg: &SolverConfig,
    spectrum: Option<SpectrumEstimate>,
) -> Result<CiqOutput> {
    solve(op, b, q, cfg, spectrum)
}

/// `K^{1/2} b`: the inverse square root followed by one MVM.
pub fn sqrt_apply<O: LinearOperator + ?Sized>(
    op: &O,
    b: &[f64],
    q: usize,
    cfg: &SolverConfig,
    spectrum: Option<SpectrumEstimate>,
) -> Result<CiqOutput> {
    let mut out = solve(op, b, q, cfg, spectrum)?;
    out.result = op.apply(&out.result)?;
    Ok(out)
}

fn batch<O: LinearOperator + ?Sized>(
    op: &O,
    bs: &[Vec<f64>],
    q: usize,
    cfg: &SolverConfig,
    spectrum: Option<SpectrumEstimate>,
    f: fn(&O, &[f64], usize, &SolverConfig, Option<SpectrumEstimate>) -> Result<CiqOutput>,
) -> Result<Vec<CiqOutput>> {
    require_spd(op)?;
    let (spectrum, _) = resolve_spectrum(op, spectrum)?;
    bs.par_iter().map(|b| f(op, b, q, cfg, Some(spectrum))).collect()
}

/// [`invsqrt_apply`] for several right-hand sides. The spectrum is estimated
/// once and the solves run in parallel; results do not depend on scheduling.
pub fn invsqrt_apply_batch<O: LinearOperator + ?Sized>(
    op: &O,
    bs: &[Vec<f64>],
    q: usize,
    cfg: &SolverConfig,
    spectrum: Option<SpectrumEstimate>,
) -> Result<Vec<CiqOutput>> {
    batch(op, bs, q, cfg, spectrum, invsqrt_apply::<O>)
}

/// [`sqrt_apply`] for several right-hand sides.
pub fn sqrt_apply_batch<O: LinearOperator + ?Sized>(
    op: &O,
    bs: &[Vec<f64>],
    q: usize,
    cfg: &SolverConfig,
    spectrum: Option<SpectrumEstimate>,
) -> Result<Vec<CiqOutput>> {
    batch(op, bs, q, cfg, spectrum, sqrt_apply::<O>)
}

/// Gradient of `vᵀ K^{-1/2} b` with respect to `K` in factored form:
/// `G = -½ Σ_q w_q (c_v^q c_b^qᵀ + c_b^q c_v^qᵀ)` with `c_x^q = (t_q I + K)^{-1} x`.
#[derive(Debug, Clone)]
pub struct GradientContraction {
    pub weights: Vec<f64>,
    pub b_solves: Vec<Vec<f64>>,
    pub v_solves: Vec<Vec<f64>>,
    /// MVMs spent by the extra solve against `v`.
    pub mvms: usize,
}

impl GradientContraction {
    pub fn dim(&self) -> usize {
        self.b_solves.first().map_or(0, Vec::len)
    }

    /// `G u`.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for ((w, cb), cv) in self.weights.iter().zip(&self.b_solves).zip(&self.v_solves) {
            let bu = crate::vector::dot(cb, u);
            let vu = crate::vector::dot(cv, u);
            axpy(-0.5 * w * bu, cv, &mut out);
            axpy(-0.5 * w * vu, cb, &mut out);
        }
        out
    }

    /// `⟨G, E⟩_F` for a symmetric direction `E`: the derivative of
    /// `vᵀ K(θ)^{-1/2} b` along `K(θ) = K + θE`.
    pub fn directional(&self, e: &DMatrix<f64>) -> f64 {
        let mut s = 0.0;
        for ((w, cb), cv) in self.weights.iter().zip(&self.b_solves).zip(&self.v_solves) {
            let ecb = e * nalgebra::DVector::from_column_slice(cb);
            s -= w * crate::vector::dot(cv, ecb.as_slice());
        }
        s
    }

    /// Dense `N × N` gradient. Meant for small problems.
    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut g = DMatrix::zeros(n, n);
        for ((w, cb), cv) in self.weights.iter().zip(&self.b_solves).zip(&self.v_solves) {
            for i in 0..n {
                for j in 0..n {
                    g[(i, j)] -= 0.5 * w * (cv[i] * cb[j] + cb[i] * cv[j]);
                }
            }
        }
        g
    }
}

/// Backward pass of `K^{-1/2} b` for the output cotangent `v`, reusing the
/// forward solve: costs one additional multi-shift solve against `v`.
pub fn sqrt_backward_from_forward<O: LinearOperator + ?Sized>(
    op: &O,
    forward: &CiqOutput,
    v: &[f64],
    cfg: &SolverConfig,
) -> Result<GradientContraction> {
    let before = op.mvm_count();
    let vb = msminres(op, v, &forward.rule.shifts, cfg)?;
    Ok(GradientContraction {
        weights: forward.rule.weights.clone(),
        b_solves: forward.bundle.solutions.clone(),
        v_solves: vb.solutions,
        mvms: op.mvm_count() - before,
    })
}

/// Backward pass of `K^{-1/2} b` for the cotangent `v` given a rule. Runs the
/// solves against `b` and `v`; use [`sqrt_backward_from_forward`] to reuse a
/// forward pass.
pub fn sqrt_backward<O: LinearOperator + ?Sized>(
    op: &O,
    b: &[f64],
    v: &[f64],
    rule: &QuadratureRule,
    cfg: &SolverConfig,
) -> Result<GradientContraction> {
    let bb = msminres(op, b, &rule.shifts, cfg)?;
    let forward = CiqOutput {
        result: bb.combine(&rule.weights),
        converged: bb.all_converged(),
        rule: rule.clone(),
        bundle: bb,
        spectrum_mvms: 0,
    };
    sqrt_backward_from_forward(op, &forward, v, cfg)
}

/// `R b` with `R = K P^{-1/2} (P^{-1/2} K P^{-1/2})^{-1/2}`, a rotated square
/// root (`R Rᵀ = K`). The multi-shift solve runs on the preconditioned
/// operator; `spectrum`, if given, refers to that operator.
pub fn precond_sample_rotated<O, P>(
    op: &O,
    precond: &P,
    b: &[f64],
    q: usize,
    cfg: &SolverConfig,
    spectrum: Option<SpectrumEstimate>,
) -> Result<CiqOutput>
where
    O: LinearOperator + ?Sized,
    P: Preconditioner + ?Sized,
{
    let mut out = precond_inner(op, precond, b, q, cfg, spectrum)?;
    let y = precond.apply_inv_sqrt(&out.result);
    out.result = op.apply(&y)?;
    Ok(out)
}

/// `R' b` with `R' = P^{-1/2} (P^{-1/2} K P^{-1/2})^{-1/2}`, a rotated inverse
/// square root (`R' R'ᵀ = K^{-1}`).
pub fn precond_whiten_rotated<O, P>(
    op: &O,
    precond: &P,
    b: &[f64],
    q: usize,
    cfg: &SolverConfig,
    spectrum: Option<SpectrumEstimate>,
) -> Result<CiqOutput>
where
    O: LinearOperator + ?Sized,
    P: Preconditioner + ?Sized,
{
    let mut out = precond_inner(op, precond, b, q, cfg, spectrum)?;
    out.result = precond.apply_inv_sqrt(&out.result);
    Ok(out)
}

/// `M^{-1/2} P^{-1/2} (P^{1/2} b)` with `M = P^{-1/2} K P^{-1/2}`.
fn precond_inner<O, P>(
    op: &O,
    precond: &P,
    b: &[f64],
    q: usize,
    cfg: &SolverConfig,
    spectrum: Option<SpectrumEstimate>,
) -> Result<CiqOutput>
where
    O: LinearOperator + ?Sized,
    P: Preconditioner + ?Sized,
{
    require_spd(op)?;
    if b.len() != op.dim() {
        return Err(CiqError::DimensionMismatch {
            expected: op.dim(),
            actual: b.len(),
        });
    }
    let m = PreconditionedOperator::new(op, precond)?;
    let rhs = precond.apply_inv_sqrt(&precond.apply_sqrt(b));
    invsqrt_apply(&m, &rhs, q, cfg, spectrum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::{DenseOperator, ScaledIdentity};
    use crate::oracle::{random_spd, DenseSpectralFactorization, MatrixPower};
    use crate::precond::IdentityPreconditioner;
    use crate::vector::relative_error;

    #[test]
    fn scaled_identity_roots() {
        let op = ScaledIdentity::new(6, 4.0);
        let b = [1.0, -1.0, 2.0, 0.0, 3.0, 0.5];
        let cfg = SolverConfig::default();
        let inv = invsqrt_apply(&op, &b, 8, &cfg, None).unwrap();
        let sq = sqrt_apply(&op, &b, 8, &cfg, None).unwrap();
        for i in 0..6 {
            assert!((inv.result[i] - b[i] / 2.0).abs() < 1e-5);
            assert!((sq.result[i] - 2.0 * b[i]).abs() < 1e-5);
        }
    }

    #[test]
    fn mvm_accounting() {
        let op = random_spd(30, 0.5, 9).unwrap();
        let b = vec![1.0; 30];
        let cfg = SolverConfig::default().with_tol(1e-8);
        let out = invsqrt_apply(&op, &b, 8, &cfg, None).unwrap();
        assert_eq!(op.mvm_count(), out.spectrum_mvms + out.iterations());
        op.mvm_counter().reset();
        let out = sqrt_apply(&op, &b, 8, &cfg, None).unwrap();
        assert_eq!(op.mvm_count(), out.spectrum_mvms + out.iterations() + 1);
    }

    #[test]
    fn matches_dense_oracle() {
        let op = random_spd(40, 0.3, 2).unwrap();
        let f = DenseSpectralFactorization::new(&op.to_matrix()).unwrap();
        let spec = SpectrumEstimate::new(f.lambda_min(), f.lambda_max()).unwrap();
        let b: Vec<f64> = (0..40).map(|i| (i as f64 * 0.7).sin()).collect();
        let cfg = SolverConfig::default().with_tol(1e-10);
        let out = invsqrt_apply(&op, &b, 16, &cfg, Some(spec)).unwrap();
        let want = f.apply_power(&b, MatrixPower::InvSqrt).unwrap();
        assert!(relative_error(&out.result, &want) < 1e-7);
    }

    #[test]
    fn identity_preconditioner_is_transparent() {
        let op = random_spd(16, 0.5, 5).unwrap();
        let p = IdentityPreconditioner::new(16);
        let b: Vec<f64> = (0..16).map(|i| i as f64 - 7.5).collect();
        let cfg = SolverConfig::default().with_tol(1e-8);
        let a = sqrt_apply(&op, &b, 8, &cfg, None).unwrap().result;
        let r = precond_sample_rotated(&op, &p, &b, 8, &cfg, None).unwrap().result;
        assert!(relative_error(&r, &a) < 1e-10);
        let a = invsqrt_apply(&op, &b, 8, &cfg, None).unwrap().result;
        let r = precond_whiten_rotated(&op, &p, &b, 8, &cfg, None).unwrap().result;
        assert!(relative_error(&r, &a) < 1e-10);
    }

    #[test]
    fn zero_cotangent_gives_zero_gradient() {
        let op = DenseOperator::diag(&[1.0, 2.0, 3.0]).unwrap();
        let cfg = SolverConfig::default();
        let fwd = invsqrt_apply(&op, &[1.0, 1.0, 1.0], 8, &cfg, None).unwrap();
        let g = sqrt_backward_from_forward(&op, &fwd, &[0.0; 3], &cfg).unwrap();
        assert!(g.dense().iter().all(|&v| v == 0.0));
        assert_eq!(g.mvms, 0);
    }

    #[test]
    fn batch_matches_single() {
        let op = random_spd(20, 0.5, 8).unwrap();
        let bs: Vec<Vec<f64>> = (0..4).map(|k| (0..20).map(|i| ((i * k) as f64).cos()).collect()).collect();
        let cfg = SolverConfig::default();
        let spec = resolve_spectrum(&op, None).unwrap().0;
        let outs = sqrt_apply_batch(&op, &bs, 8, &cfg, Some(spec)).unwrap();
        for (b, o) in bs.iter().zip(&outs) {
            let single = sqrt_apply(&op, b, 8, &cfg, Some(spec)).unwrap();
            assert_eq!(single.result, o.result);
        }
    }

    #[test]
    fn rejects_non_spd_flag() {
        let op = crate::linop::FnOperator::new(2, |x: &[f64], y: &mut [f64]| y.copy_from_slice(x))
            .with_flags(true, false);
        assert!(invsqrt_apply(&op, &[1.0, 0.0], 4, &SolverConfig::default(), None).is_err());
    }
}
