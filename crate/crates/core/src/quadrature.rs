//! Shifts and weights for `K^{-1/2} ≈ Σ_q w_q (t_q I + K)^{-1}`.
//!
//! The rule is the trapezoid rule on a conformal map of the contour around
//! `[λ_min, λ_max]` built from Jacobi elliptic functions with modulus
//! `k = 1/sqrt(κ)`. With `u_q = (q - ½)/Q` and `K' = K(k')`,
//!
//! ```text
//! t_q = λ_min · sc²(u_q K' | k')
//! w_q = 2 sqrt(λ_min) K' / (π Q) · nc(u_q K' | k') · dc(u_q K' | k')
//! ```
//!
//! which are the values of `-λ_min sn²(i u_q K' | k)` and of the contour
//! weights after the imaginary transformation, so everything stays real.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::Serialize;

use crate::elliptic::EllipticModulus;
use crate::error::{CiqError, Result};
use crate::lanczos::SpectrumEstimate;

/// Quadrature size used by the benchmarks.
pub const DEFAULT_Q: usize = 8;
/// Quadrature size used by the sampling applications.
pub const APP_Q: usize = 15;

const KAPPA_FLOOR: f64 = 1.0 + 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct QuadratureRule {
    pub shifts: Vec<f64>,
    pub weights: Vec<f64>,
    pub spectrum: SpectrumEstimate,
    /// Condition number after clamping.
    pub kappa: f64,
    #[serde(skip)]
    pub modulus: EllipticModulus,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.shifts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shifts.is_empty()
    }

    /// `Σ_q w_q / (t_q + λ) ≈ λ^{-1/2}`.
    pub fn invsqrt_scalar(&self, lambda: f64) -> f64 {
        self.shifts
            .iter()
            .zip(&self.weights)
            .map(|(t, w)| w / (t + lambda))
            .sum()
    }

    /// `λ Σ_q w_q / (t_q + λ) ≈ λ^{1/2}`.
    pub fn sqrt_scalar(&self, lambda: f64) -> f64 {
        lambda * self.invsqrt_scalar(lambda)
    }

    /// `Σ_q w_q / t_q`.
    pub fn weight_shift_ratio_sum(&self) -> f64 {
        self.shifts
            .iter()
            .zip(&self.weights)
            .map(|(t, w)| w / t)
            .sum()
    }

    /// Upper bound `4 Q log(5 sqrt(κ)) / (π sqrt(λ_min))` on
    /// [`weight_shift_ratio_sum`](Self::weight_shift_ratio_sum).
    pub fn weight_shift_ratio_bound(&self) -> f64 {
        4.0 * self.len() as f64 * (5.0 * self.kappa.sqrt()).ln()
            / (PI * self.spectrum.lambda_min.sqrt())
    }

    /// Tab-separated `q t_q w_q` table, one line per node, 1-based `q`.
    pub fn to_table(&self) -> String {
        let mut s = String::from("q\tshift\tweight\n");
        for (i, (t, w)) in self.shifts.iter().zip(&self.weights).enumerate() {
            let _ = writeln!(s, "{}\t{:.17e}\t{:.17e}", i + 1, t, w);
        }
        s
    }
}

/// Builds the `Q`-point rule for the spectrum interval. `κ` is clamped to at
/// least `1 + 1e-8` so that `λ_min = λ_max` still yields a valid rule.
pub fn build_rule(spectrum: SpectrumEstimate, q: usize) -> Result<QuadratureRule> {
    if q < 1 {
        return Err(CiqError::invalid("quadrature needs at least one point"));
    }
    let kappa = spectrum.kappa().max(KAPPA_FLOOR);
    let modulus = EllipticModulus::from_condition_number(kappa)?;
    let lmin = spectrum.lambda_min;
    let kp = modulus.k_kprime;
    let scale = 2.0 * lmin.sqrt() * kp / (PI * q as f64);

    let mut shifts = Vec::with_capacity(q);
    let mut weights = Vec::with_capacity(q);
    for i in 1..=q {
        let u = (i as f64 - 0.5) / q as f64 * kp;
        let (sc, nc, dc) = modulus.imaginary(u)?;
        shifts.push(lmin * sc * sc);
        weights.push(scale * nc * dc);
    }
    Ok(QuadratureRule {
        shifts,
        weights,
        spectrum,
        kappa,
        modulus,
    })
}

/// `λ Σ_q w_q / (t_q + λ)`: the rule applied to a 1×1 matrix.
pub fn rational_sqrt_scalar(rule: &QuadratureRule, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(CiqError::Domain {
            what: "lambda",
            value: lambda,
            domain: "(0, inf)",
        });
    }
    Ok(rule.sqrt_scalar(lambda))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(a: f64, b: f64) -> SpectrumEstimate {
        SpectrumEstimate::new(a, b).unwrap()
    }

    #[test]
    fn clamp_path() {
        let r = build_rule(spec(1.0, 1.0), 4).unwrap();
        assert!((rational_sqrt_scalar(&r, 1.0).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn scalar_sqrt_kappa_1e4() {
        let r = build_rule(spec(1.0, 1e4), 8).unwrap();
        for lam in [1.0, 10.0, 100.0, 1e4] {
            let got = r.sqrt_scalar(lam);
            assert!((got - lam.sqrt()).abs() < 1e-5 * lam.sqrt(), "λ={lam}: {got}");
        }
    }

    #[test]
    fn scalar_sqrt_of_four() {
        let r = build_rule(spec(1.0, 16.0), 8).unwrap();
        assert!((r.sqrt_scalar(4.0) - 2.0).abs() < 1e-6);
    }

    #[test]
    fn positive_sorted_nodes() {
        let r = build_rule(spec(0.01, 50.0), 12).unwrap();
        assert!(r.shifts.iter().all(|&t| t > 0.0));
        assert!(r.weights.iter().all(|&w| w > 0.0));
        assert!(r.shifts.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn error_decays_geometrically() {
        // Predicted rate exp(-2π²Q/(log κ + 3)).
        let kappa: f64 = 1e4;
        let rate = (-2.0 * PI * PI / (kappa.ln() + 3.0)).exp();
        let err = |q| {
            let r = build_rule(spec(1.0, kappa), q).unwrap();
            [1.0, 30.0, 1e4]
                .iter()
                .map(|&l: &f64| (r.sqrt_scalar(l) - l.sqrt()).abs() / l.sqrt())
                .fold(0.0, f64::max)
        };
        let (e4, e8) = (err(4), err(8));
        assert!(e8 < e4);
        // Four extra nodes buy at least the predicted factor up to a constant.
        assert!(e8 / e4 < 10.0 * rate.powi(4), "{e4} {e8} {rate}");
    }

    #[test]
    fn zero_points_rejected() {
        assert!(build_rule(spec(1.0, 2.0), 0).is_err());
    }

    #[test]
    fn table_has_header_and_rows() {
        let r = build_rule(spec(1.0, 2.0), 3).unwrap();
        assert_eq!(r.to_table().lines().count(), 4);
    }
}
