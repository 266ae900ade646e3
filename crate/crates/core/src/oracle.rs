//! Dense reference implementations. Everything here is `O(N³)` and exists to
//! check the matrix-free code on small problems.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{CiqError, Result};
use crate::linop::DenseOperator;
use crate::random;

/// Largest dimension the oracles accept.
pub const ORACLE_MAX_DIM: usize = 1024;

const SYMMETRY_TOL: f64 = 1e-10;

/// Matrix powers the oracle evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixPower {
    Sqrt,
    InvSqrt,
    Inverse,
}

impl MatrixPower {
    pub fn exponent(self) -> f64 {
        match self {
            MatrixPower::Sqrt => 0.5,
            MatrixPower::InvSqrt => -0.5,
            MatrixPower::Inverse => -1.0,
        }
    }
}

/// `K = V Λ Vᵀ` with eigenvalues in ascending order.
#[derive(Debug, Clone)]
pub struct DenseSpectralFactorization {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl DenseSpectralFactorization {
    pub fn new(k: &DMatrix<f64>) -> Result<Self> {
        let n = k.nrows();
        if n == 0 || k.ncols() != n {
            return Err(CiqError::invalid("oracle needs a nonempty square matrix"));
        }
        if n > ORACLE_MAX_DIM {
            return Err(CiqError::invalid(format!(
                "dense oracle is limited to N <= {ORACLE_MAX_DIM}, got {n}"
            )));
        }
        let scale = k.amax().max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in (i + 1)..n {
                let diff = (k[(i, j)] - k[(j, i)]).abs();
                if diff > SYMMETRY_TOL * scale {
                    return Err(CiqError::NotSymmetric { i, j, diff });
                }
            }
        }
        let eig = SymmetricEigen::new(k.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let eigenvectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        Ok(Self {
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(CiqError::invalid("oracle needs a square matrix"));
        }
        Self::new(&DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[self.dim() - 1]
    }

    pub fn condition_number(&self) -> f64 {
        self.lambda_max() / self.lambda_min()
    }

    fn check_pd(&self) -> Result<()> {
        match self.eigenvalues.iter().position(|&l| l <= 0.0) {
            Some(index) => Err(CiqError::NotPositiveDefinite {
                index,
                value: self.eigenvalues[index],
            }),
            None => Ok(()),
        }
    }

    /// `V f(Λ) Vᵀ b`.
    pub fn apply_fn(&self, b: &[f64], f: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
        if b.len() != self.dim() {
            return Err(CiqError::DimensionMismatch {
                expected: self.dim(),
                actual: b.len(),
            });
        }
        let bv = DVector::from_column_slice(b);
        let mut coeffs = self.eigenvectors.tr_mul(&bv);
        for (c, &l) in coeffs.iter_mut().zip(&self.eigenvalues) {
            *c *= f(l);
        }
        Ok((&self.eigenvectors * coeffs).iter().copied().collect())
    }

    /// `K^p b`. Requires positive eigenvalues.
    pub fn apply_power(&self, b: &[f64], power: MatrixPower) -> Result<Vec<f64>> {
        self.check_pd()?;
        let e = power.exponent();
        self.apply_fn(b, |l| l.powf(e))
    }

    /// Dense `K^p`.
    pub fn matrix_power(&self, power: MatrixPower) -> Result<DMatrix<f64>> {
        self.check_pd()?;
        let e = power.exponent();
        let d = DMatrix::from_diagonal(&DVector::from_iterator(
            self.dim(),
            self.eigenvalues.iter().map(|l| l.powf(e)),
        ));
        Ok(&self.eigenvectors * d * self.eigenvectors.transpose())
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let d = DMatrix::from_diagonal(&DVector::from_column_slice(&self.eigenvalues));
        &self.eigenvectors * d * self.eigenvectors.transpose()
    }
}

/// `K^p b` for a dense symmetric positive-definite `K` given by rows.
pub fn dense_sqrt_apply(k: &[Vec<f64>], b: &[f64], power: MatrixPower) -> Result<Vec<f64>> {
    DenseSpectralFactorization::from_rows(k)?.apply_power(b, power)
}

/// Eigenvalue decay profiles `λ_t`, `t = 1..N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumDecay {
    /// `t^{-1/2}`
    InvSqrt,
    /// `t^{-1}`
    InvLinear,
    /// `t^{-2}`
    InvSquare,
    /// `exp(-(t - 1))`
    Exponential,
}

impl SpectrumDecay {
    pub fn eigenvalue(self, t: usize) -> f64 {
        let t = t as f64;
        match self {
            SpectrumDecay::InvSqrt => t.powf(-0.5),
            SpectrumDecay::InvLinear => 1.0 / t,
            SpectrumDecay::InvSquare => t.powi(-2),
            SpectrumDecay::Exponential => (-(t - 1.0)).exp(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SpectrumDecay::InvSqrt => "inv_sqrt",
            SpectrumDecay::InvLinear => "inv_linear",
            SpectrumDecay::InvSquare => "inv_square",
            SpectrumDecay::Exponential => "exponential",
        }
    }
}

impl FromStr for SpectrumDecay {
    type Err = CiqError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inv_sqrt" => Ok(SpectrumDecay::InvSqrt),
            "inv_linear" => Ok(SpectrumDecay::InvLinear),
            "inv_square" => Ok(SpectrumDecay::InvSquare),
            "exponential" => Ok(SpectrumDecay::Exponential),
            other => Err(CiqError::invalid(format!(
                "unknown decay {other:?} (expected inv_sqrt, inv_linear, inv_square or exponential)"
            ))),
        }
    }
}

/// Haar-ish random orthogonal matrix: the `Q` factor of a Gaussian matrix,
/// with column signs fixed by `diag(R) > 0`.
pub fn random_orthogonal(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = random::rng(seed);
    let g = DMatrix::from_vec(n, n, random::standard_normal_vec(&mut rng, n * n));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `Q diag(eigenvalues) Qᵀ` with a seeded random orthogonal `Q`.
pub fn matrix_with_spectrum(eigenvalues: &[f64], seed: u64) -> Result<DenseOperator> {
    let n = eigenvalues.len();
    let q = random_orthogonal(n, seed);
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(eigenvalues));
    DenseOperator::from_matrix(&(&q * d * q.transpose()))
}

/// Dense SPD matrix with the named eigenvalue decay.
pub fn make_spectrum_matrix(n: usize, decay: SpectrumDecay, seed: u64) -> Result<DenseOperator> {
    if n < 2 {
        return Err(CiqError::invalid("spectrum matrices need N >= 2"));
    }
    let eig: Vec<f64> = (1..=n).map(|t| decay.eigenvalue(t)).collect();
    matrix_with_spectrum(&eig, seed)
}

/// `G Gᵀ / N + shift·I` with Gaussian `G`.
pub fn random_spd(n: usize, shift: f64, seed: u64) -> Result<DenseOperator> {
    let mut rng = random::rng(seed);
    let g = DMatrix::from_vec(n, n, random::standard_normal_vec(&mut rng, n * n));
    let mut k = &g * g.transpose() / n as f64;
    for i in 0..n {
        k[(i, i)] += shift;
    }
    DenseOperator::from_matrix(&k)
}

/// Sample covariance `(1/S) Σ x xᵀ` of zero-mean draws.
pub fn empirical_covariance(samples: &[Vec<f64>]) -> DMatrix<f64> {
    let n = samples.first().map_or(0, Vec::len);
    let mut c = DMatrix::zeros(n, n);
    for s in samples {
        let v = DVector::from_column_slice(s);
        c.ger(1.0, &v, &v, 1.0);
    }
    c / samples.len().max(1) as f64
}

/// `‖A - B‖_F / ‖B‖_F`.
pub fn relative_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}
