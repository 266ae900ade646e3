use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use super::{LinearOperator, MvmCounter};
use crate::error::{CiqError, Result};

/// Operators up to this size keep their kernel matrix in memory; larger ones
/// recompute entries on every product.
const CACHE_LIMIT: usize = 2048;

/// Rows below this size are multiplied serially.
const PAR_THRESHOLD: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Rbf,
    Matern52,
    Matern32,
}

impl KernelKind {
    /// Correlation as a function of distance `r` for unit outputscale.
    #[inline]
    pub fn correlation(self, r: f64, lengthscale: f64) -> f64 {
        match self {
            KernelKind::Rbf => (-0.5 * (r / lengthscale).powi(2)).exp(),
            KernelKind::Matern52 => {
                let s = 5f64.sqrt() * r / lengthscale;
                (1.0 + s + s * s / 3.0) * (-s).exp()
            }
            KernelKind::Matern32 => {
                let s = 3f64.sqrt() * r / lengthscale;
                (1.0 + s) * (-s).exp()
            }
        }
    }
}

impl FromStr for KernelKind {
    type Err = CiqError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rbf" => Ok(KernelKind::Rbf),
            "matern52" => Ok(KernelKind::Matern52),
            "matern32" => Ok(KernelKind::Matern32),
            other => Err(CiqError::invalid(format!(
                "unknown kernel {other:?} (expected rbf, matern52 or matern32)"
            ))),
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelKind::Rbf => "rbf",
            KernelKind::Matern52 => "matern52",
            KernelKind::Matern32 => "matern32",
        })
    }
}

/// Stationary kernel hyperparameters. `outputscale` is the marginal variance
/// `k(x, x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub kind: KernelKind,
    pub lengthscale: f64,
    pub outputscale: f64,
    /// Added to the diagonal. `None` means `1e-4 · outputscale`.
    pub jitter: Option<f64>,
}

impl KernelParams {
    pub fn new(kind: KernelKind, lengthscale: f64, outputscale: f64) -> Self {
        Self {
            kind,
            lengthscale,
            outputscale,
            jitter: None,
        }
    }

    pub fn with_jitter(mut self, jitter: f64) -> Self {
        self.jitter = Some(jitter);
        self
    }

    pub fn jitter(&self) -> f64 {
        self.jitter.unwrap_or(1e-4 * self.outputscale)
    }

    /// `k(a, b)` without jitter.
    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        self.outputscale * self.kind.correlation(r2.sqrt(), self.lengthscale)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lengthscale > 0.0 && self.lengthscale.is_finite()) {
            return Err(CiqError::Domain {
                what: "lengthscale",
                value: self.lengthscale,
                domain: "(0, inf)",
            });
        }
        if !(self.outputscale > 0.0 && self.outputscale.is_finite()) {
            return Err(CiqError::Domain {
                what: "outputscale",
                value: self.outputscale,
                domain: "(0, inf)",
            });
        }
        let jitter = self.jitter();
        if !(jitter >= 0.0 && jitter.is_finite()) {
            return Err(CiqError::Domain {
                what: "jitter",
                value: jitter,
                domain: "[0, inf)",
            });
        }
        Ok(())
    }
}

/// Kernel matrix `K_ij = k(x_i, x_j) + jitter·δ_ij` over a point set.
#[derive(Debug, Clone)]
pub struct KernelOperator {
    points: Vec<f64>,
    n: usize,
    d: usize,
    params: KernelParams,
    jitter: f64,
    cache: Option<Vec<f64>>,
    counter: MvmCounter,
}

impl KernelOperator {
    pub fn new(points: &[Vec<f64>], params: KernelParams) -> Result<Self> {
        params.validate()?;
        let n = points.len();
        if n == 0 {
            return Err(CiqError::invalid("kernel operator needs at least one point"));
        }
        let d = points[0].len();
        let mut flat = Vec::with_capacity(n * d);
        for (i, p) in points.iter().enumerate() {
            if p.len() != d {
                return Err(CiqError::invalid(format!(
                    "point {i} has dimension {} but point 0 has dimension {d}",
                    p.len()
                )));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(CiqError::invalid(format!("point {i} has a non-finite coordinate")));
            }
            flat.extend_from_slice(p);
        }
        let mut op = Self {
            points: flat,
            n,
            d,
            jitter: params.jitter(),
            params,
            cache: None,
            counter: MvmCounter::new(),
        };
        if n <= CACHE_LIMIT {
            op.cache = Some(op.build_cache());
        }
        Ok(op)
    }

    /// Drops the cached kernel matrix so every product recomputes entries.
    pub fn without_cache(mut self) -> Self {
        self.cache = None;
        self
    }

    fn build_cache(&self) -> Vec<f64> {
        let n = self.n;
        let mut m = vec![0.0; n * n];
        m.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.entry(i, j);
            }
        });
        m
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    pub fn num_points(&self) -> usize {
        self.n
    }

    pub fn point_dim(&self) -> usize {
        self.d
    }

    pub fn jitter_value(&self) -> f64 {
        self.jitter
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let v = self.params.eval(self.point(i), self.point(j));
        if i == j {
            v + self.jitter
        } else {
            v
        }
    }

    /// `k(x_i, z_j)` for every operator point `x_i` and every `z_j` in `others`.
    pub fn cross_covariance(&self, others: &[Vec<f64>]) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| {
                others
                    .iter()
                    .map(|z| self.params.eval(self.point(i), z))
                    .collect()
            })
            .collect()
    }

    fn row_product(&self, i: usize, x: &[f64]) -> f64 {
        match &self.cache {
            Some(m) => m[i * self.n..(i + 1) * self.n]
                .iter()
                .zip(x)
                .map(|(a, b)| a * b)
                .sum(),
            None => (0..self.n).map(|j| self.entry(i, j) * x[j]).sum(),
        }
    }
}

impl LinearOperator for KernelOperator {
    fn dim(&self) -> usize {
        self.n
    }

    fn matvec(&self, x: &[f64], out: &mut [f64]) {
        if self.n >= PAR_THRESHOLD {
            out.par_iter_mut()
                .enumerate()
                .for_each(|(i, o)| *o = self.row_product(i, x));
        } else {
            for (i, o) in out.iter_mut().enumerate() {
                *o = self.row_product(i, x);
            }
        }
    }

    fn mvm_counter(&self) -> &MvmCounter {
        &self.counter
    }

    fn is_positive_definite(&self) -> bool {
        self.jitter > 0.0
    }

    fn diagonal(&self) -> Option<Vec<f64>> {
        Some(vec![self.params.outputscale + self.jitter; self.n])
    }

    fn column(&self, j: usize) -> Option<Vec<f64>> {
        Some((0..self.n).map(|i| self.entry(i, j)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_is_outputscale_plus_jitter() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.5], vec![-0.3, 2.0]];
        for kind in [KernelKind::Rbf, KernelKind::Matern52, KernelKind::Matern32] {
            let op = KernelOperator::new(&pts, KernelParams::new(kind, 0.7, 2.5)).unwrap();
            for i in 0..3 {
                assert!((op.entry(i, i) - (2.5 + 2.5e-4)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rbf_closed_form() {
        let p = KernelParams::new(KernelKind::Rbf, 2.0, 3.0);
        let v = p.eval(&[0.0], &[1.0]);
        assert!((v - 3.0 * (-1.0f64 / 8.0).exp()).abs() < 1e-15);
    }

    #[test]
    fn matern_closed_forms() {
        let r = 0.8f64;
        let l = 0.5f64;
        let s5 = 5f64.sqrt() * r / l;
        let s3 = 3f64.sqrt() * r / l;
        let m52 = KernelParams::new(KernelKind::Matern52, l, 1.0).eval(&[0.0], &[r]);
        let m32 = KernelParams::new(KernelKind::Matern32, l, 1.0).eval(&[0.0], &[r]);
        assert!((m52 - (1.0 + s5 + s5 * s5 / 3.0) * (-s5).exp()).abs() < 1e-15);
        assert!((m32 - (1.0 + s3) * (-s3).exp()).abs() < 1e-15);
    }

    #[test]
    fn cached_and_uncached_agree() {
        let pts: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 0.1, (i * i) as f64 * 0.01]).collect();
        let a = KernelOperator::new(&pts, KernelParams::new(KernelKind::Matern32, 0.4, 1.0)).unwrap();
        let b = a.clone().without_cache();
        let x: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        assert_eq!(a.apply(&x).unwrap(), b.apply(&x).unwrap());
    }

    #[test]
    fn parse_kernel_kind() {
        assert_eq!("RBF".parse::<KernelKind>().unwrap(), KernelKind::Rbf);
        assert!("linear".parse::<KernelKind>().is_err());
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let pts = vec![vec![0.0]];
        assert!(KernelOperator::new(&pts, KernelParams::new(KernelKind::Rbf, 0.0, 1.0)).is_err());
        assert!(KernelOperator::new(&pts, KernelParams::new(KernelKind::Rbf, 1.0, -1.0)).is_err());
        assert!(KernelOperator::new(
            &pts,
            KernelParams::new(KernelKind::Rbf, 1.0, 1.0).with_jitter(-1.0)
        )
        .is_err());
    }
}
