use nalgebra::{DMatrix, DVector};

use super::{LinearOperator, MvmCounter};
use crate::error::{CiqError, Result};

/// `F Fᵀ + σ² I` with an `N×R` factor `F`. Products cost `O(NR)`.
#[derive(Debug, Clone)]
pub struct LowRankPlusDiagOperator {
    factor: DMatrix<f64>,
    sigma2: f64,
    counter: MvmCounter,
}

impl LowRankPlusDiagOperator {
    pub fn new(factor: DMatrix<f64>, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(CiqError::Domain {
                what: "sigma2",
                value: sigma2,
                domain: "(0, inf)",
            });
        }
        Ok(Self {
            factor,
            sigma2,
            counter: MvmCounter::new(),
        })
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }
}

impl LinearOperator for LowRankPlusDiagOperator {
    fn dim(&self) -> usize {
        self.factor.nrows()
    }

    fn matvec(&self, x: &[f64], out: &mut [f64]) {
        let xv = DVector::from_column_slice(x);
        let inner = self.factor.tr_mul(&xv);
        let y = &self.factor * inner;
        for ((o, yi), xi) in out.iter_mut().zip(y.iter()).zip(x) {
            *o = yi + self.sigma2 * xi;
        }
    }

    fn mvm_counter(&self) -> &MvmCounter {
        &self.counter
    }

    fn diagonal(&self) -> Option<Vec<f64>> {
        Some(
            (0..self.dim())
                .map(|i| self.factor.row(i).norm_squared() + self.sigma2)
                .collect(),
        )
    }

    fn column(&self, j: usize) -> Option<Vec<f64>> {
        let rj = self.factor.row(j).transpose();
        let mut c: Vec<f64> = (&self.factor * rj).iter().copied().collect();
        c[j] += self.sigma2;
        Some(c)
    }
}
