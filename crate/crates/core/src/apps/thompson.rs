//! One Thompson-sampling step: draw joint posterior samples over a candidate
//! set and return the minimizer of each.
//!
//! The training block `Kxx + σ²I` is small and factorized densely; the
//! candidate covariance `COV* = K** - K*x (Kxx + σ²I)^{-1} Kx*` is applied
//! matrix-free and sampled with [`sqrt_apply`].

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use crate::ciq::{resolve_spectrum, sqrt_apply};
use crate::error::{CiqError, Result};
use crate::lanczos::SpectrumEstimate;
use crate::linop::{KernelOperator, KernelParams, LinearOperator, MvmCounter};
use crate::msminres::SolverConfig;
use crate::random;
use crate::vector::argmin;

const NEGATIVE_VARIANCE_TOL: f64 = -1e-8;

#[derive(Debug, Clone)]
pub struct ThompsonProblem {
    pub train_x: Vec<Vec<f64>>,
    pub train_y: Vec<f64>,
    pub candidates: Vec<Vec<f64>>,
    pub kernel: KernelParams,
    /// Observation noise variance `σ²`.
    pub noise: f64,
}

/// Posterior over the candidate set.
pub struct Posterior {
    pub mean: Vec<f64>,
    pub covariance: PosteriorCovariance,
}

/// `COV* = K** - C A^{-1} Cᵀ` with `C = K*x` and `A = Kxx + σ²I`.
pub struct PosteriorCovariance {
    prior: KernelOperator,
    cross: DMatrix<f64>,
    train_chol: Option<Cholesky<f64, Dyn>>,
    counter: MvmCounter,
}

impl PosteriorCovariance {
    /// `A^{-1} Cᵀ x`, or `None` without training data.
    fn reduce(&self, x: &[f64]) -> Option<DVector<f64>> {
        self.train_chol
            .as_ref()
            .map(|ch| ch.solve(&self.cross.tr_mul(&DVector::from_column_slice(x))))
    }

    /// Dense `COV*`. For tests and small candidate sets.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let t = self.prior.num_points();
        let mut k = DMatrix::from_fn(t, t, |i, j| self.prior.entry(i, j));
        if let Some(ch) = &self.train_chol {
            let sol = ch.solve(&self.cross.transpose());
            k -= &self.cross * sol;
        }
        k
    }
}

impl LinearOperator for PosteriorCovariance {
    fn dim(&self) -> usize {
        self.prior.num_points()
    }

    fn matvec(&self, x: &[f64], out: &mut [f64]) {
        self.prior.matvec(x, out);
        if let Some(z) = self.reduce(x) {
            let corr = &self.cross * z;
            for (o, c) in out.iter_mut().zip(corr.iter()) {
                *o -= c;
            }
        }
    }

    fn mvm_counter(&self) -> &MvmCounter {
        &self.counter
    }

    fn diagonal(&self) -> Option<Vec<f64>> {
        let mut d = self.prior.diagonal()?;
        if let Some(ch) = &self.train_chol {
            let sol = ch.solve(&self.cross.transpose());
            for (i, di) in d.iter_mut().enumerate() {
                *di -= self.cross.row(i).dot(&sol.column(i).transpose());
            }
        }
        Some(d)
    }

    fn column(&self, j: usize) -> Option<Vec<f64>> {
        let mut e = vec![0.0; self.dim()];
        e[j] = 1.0;
        let mut out = vec![0.0; self.dim()];
        self.matvec(&e, &mut out);
        Some(out)
    }
}

impl ThompsonProblem {
    pub fn validate(&self) -> Result<()> {
        if self.candidates.is_empty() {
            return Err(CiqError::invalid("Thompson step needs at least one candidate"));
        }
        if self.train_x.len() != self.train_y.len() {
            return Err(CiqError::invalid(format!(
                "{} training points but {} targets",
                self.train_x.len(),
                self.train_y.len()
            )));
        }
        if !(self.noise > 0.0 && self.noise.is_finite()) {
            return Err(CiqError::Domain {
                what: "noise",
                value: self.noise,
                domain: "(0, inf)",
            });
        }
        let d = self.candidates[0].len();
        if self.train_x.iter().any(|p| p.len() != d) {
            return Err(CiqError::invalid("training and candidate points differ in dimension"));
        }
        Ok(())
    }

    /// Posterior mean and covariance operator on the candidates. Fails with a
    /// jitter hint if a posterior variance is below `-1e-8`.
    pub fn posterior(&self) -> Result<Posterior> {
        self.validate()?;
        let prior = KernelOperator::new(&self.candidates, self.kernel)?;
        let t = self.candidates.len();
        let n = self.train_x.len();
        let (mean, cross, train_chol) = if n == 0 {
            (vec![0.0; t], DMatrix::zeros(t, 0), None)
        } else {
            let mut a = DMatrix::from_fn(n, n, |i, j| self.kernel.eval(&self.train_x[i], &self.train_x[j]));
            for i in 0..n {
                a[(i, i)] += self.noise;
            }
            let ch = Cholesky::new(a)
                .ok_or_else(|| CiqError::invalid("training covariance is not positive definite"))?;
            let cross = DMatrix::from_fn(t, n, |i, j| self.kernel.eval(&self.candidates[i], &self.train_x[j]));
            let alpha = ch.solve(&DVector::from_column_slice(&self.train_y));
            let mean = (&cross * alpha).iter().copied().collect();
            (mean, cross, Some(ch))
        };
        let covariance = PosteriorCovariance {
            prior,
            cross,
            train_chol,
            counter: MvmCounter::new(),
        };
        let diag = covariance.diagonal().expect("kernel diagonal");
        if let Some((index, &value)) = diag
            .iter()
            .enumerate()
            .find(|(_, &v)| v < NEGATIVE_VARIANCE_TOL)
        {
            return Err(CiqError::NonPdPosterior { index, value });
        }
        Ok(Posterior { mean, covariance })
    }
}

#[derive(Debug, Clone)]
pub struct ThompsonResult {
    /// Argmin candidate index for each sample.
    pub indices: Vec<usize>,
    pub spectrum: SpectrumEstimate,
    /// Multi-shift iterations per sample.
    pub iterations: Vec<usize>,
    pub all_converged: bool,
}

/// Argmins of `μ* + COV*^{1/2} ε` for the given standard-normal vectors.
pub fn thompson_draws(
    problem: &ThompsonProblem,
    eps: &[Vec<f64>],
    q: usize,
    cfg: &SolverConfig,
) -> Result<ThompsonResult> {
    let post = problem.posterior()?;
    let cov = &post.covariance;
    let (spectrum, _) = resolve_spectrum(cov, None)?;
    let outs: Vec<_> = eps
        .par_iter()
        .map(|e| sqrt_apply(cov, e, q, cfg, Some(spectrum)))
        .collect::<Result<_>>()?;
    let indices = outs
        .iter()
        .map(|o| {
            let f: Vec<f64> = post.mean.iter().zip(&o.result).map(|(m, z)| m + z).collect();
            argmin(&f).expect("at least one candidate")
        })
        .collect();
    Ok(ThompsonResult {
        indices,
        spectrum,
        iterations: outs.iter().map(|o| o.iterations()).collect(),
        all_converged: outs.iter().all(|o| o.converged),
    })
}

/// Draws `n_samples` posterior samples (seeded) and returns their argmins.
/// Ties go to the lowest index.
pub fn thompson_step(
    problem: &ThompsonProblem,
    n_samples: usize,
    q: usize,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<ThompsonResult> {
    let t = problem.candidates.len();
    let mut rng = random::rng(seed);
    let eps: Vec<Vec<f64>> = (0..n_samples)
        .map(|_| random::standard_normal_vec(&mut rng, t))
        .collect();
    thompson_draws(problem, &eps, q, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::KernelKind;

    fn problem(n_train: usize) -> ThompsonProblem {
        ThompsonProblem {
            train_x: (0..n_train).map(|i| vec![i as f64 / 4.0]).collect(),
            train_y: (0..n_train).map(|i| (i as f64).sin()).collect(),
            candidates: (0..30).map(|i| vec![i as f64 / 30.0]).collect(),
            kernel: KernelParams::new(KernelKind::Rbf, 0.2, 1.0),
            noise: 1e-2,
        }
    }

    #[test]
    fn no_training_data_is_prior() {
        let p = problem(0);
        let post = p.posterior().unwrap();
        assert!(post.mean.iter().all(|&m| m == 0.0));
        let prior = KernelOperator::new(&p.candidates, p.kernel).unwrap();
        let x: Vec<f64> = (0..30).map(|i| i as f64).collect();
        assert_eq!(post.covariance.apply(&x).unwrap(), prior.apply(&x).unwrap());
    }

    #[test]
    fn matrix_free_matches_dense() {
        let p = problem(4);
        let post = p.posterior().unwrap();
        let dense = post.covariance.to_dense();
        let x: Vec<f64> = (0..30).map(|i| (i as f64 * 0.3).cos()).collect();
        let want = &dense * DVector::from_column_slice(&x);
        let got = post.covariance.apply(&x).unwrap();
        for (a, b) in got.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let diag = post.covariance.diagonal().unwrap();
        for (i, d) in diag.iter().enumerate() {
            assert!((d - dense[(i, i)]).abs() < 1e-12);
        }
    }

    #[test]
    fn seeded_step_is_reproducible() {
        let p = problem(3);
        let cfg = SolverConfig::default().with_tol(1e-3);
        let a = thompson_step(&p, 5, 8, &cfg, 42).unwrap();
        let b = thompson_step(&p, 5, 8, &cfg, 42).unwrap();
        assert_eq!(a.indices, b.indices);
        assert!(a.indices.iter().all(|&i| i < 30));
    }

    #[test]
    fn rejects_mismatched_training_data() {
        let mut p = problem(3);
        p.train_y.pop();
        assert!(p.posterior().is_err());
    }
}
