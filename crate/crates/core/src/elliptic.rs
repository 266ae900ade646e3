//! Complete elliptic integrals of the first kind and the Jacobi elliptic
//! functions, in real arithmetic.
//!
//! The modulus and its complement are always carried together. For moduli
//! close to one, `k' = sqrt(1 - k²)` loses most of its digits, so callers who
//! know `k'` exactly (the quadrature rule does) pass it in directly.

use std::f64::consts::FRAC_PI_2;

use crate::error::{CiqError, Result};

const AGM_TOL: f64 = 1e-15;
const AGM_MAX_ITERS: usize = 50;
const LANDEN_MAX_DEPTH: usize = 64;
const POLE_EPS: f64 = 1e-12;

fn check_modulus(k: f64) -> Result<()> {
    if !(0.0..1.0).contains(&k) {
        return Err(CiqError::Domain {
            what: "elliptic modulus k",
            value: k,
            domain: "[0, 1)",
        });
    }
    Ok(())
}

/// `sqrt(1 - k²)` evaluated as `sqrt((1 - k)(1 + k))`.
#[inline]
pub fn complement(k: f64) -> f64 {
    ((1.0 - k) * (1.0 + k)).sqrt()
}

fn agm(mut a: f64, mut b: f64) -> f64 {
    for _ in 0..AGM_MAX_ITERS {
        if (a - b).abs() <= AGM_TOL * a {
            break;
        }
        let an = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = an;
    }
    0.5 * (a + b)
}

/// `K(k)`, the complete elliptic integral of the first kind.
pub fn complete_elliptic_k(k: f64) -> Result<f64> {
    check_modulus(k)?;
    Ok(FRAC_PI_2 / agm(1.0, complement(k)))
}

/// `K` expressed through the complementary modulus: returns `K(sqrt(1 - kc²))`.
/// Exact for tiny `kc`, where forming the modulus first would round to one.
pub fn complete_elliptic_k_from_complement(kc: f64) -> Result<f64> {
    if !(kc > 0.0 && kc <= 1.0) {
        return Err(CiqError::Domain {
            what: "complementary modulus k'",
            value: kc,
            domain: "(0, 1]",
        });
    }
    Ok(FRAC_PI_2 / agm(1.0, kc))
}

/// A modulus together with its complement and both complete integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticModulus {
    pub k: f64,
    pub k_prime: f64,
    /// `K(k)`.
    pub k_k: f64,
    /// `K'(k) = K(k')`.
    pub k_kprime: f64,
}

impl EllipticModulus {
    pub fn new(k: f64) -> Result<Self> {
        check_modulus(k)?;
        Self::from_pair(k, complement(k))
    }

    /// The modulus `k = 1/sqrt(κ)` used by the square-root quadrature. The
    /// complement is formed as `sqrt((κ - 1)/κ)` to keep full precision.
    pub fn from_condition_number(kappa: f64) -> Result<Self> {
        if !(kappa > 1.0 && kappa.is_finite()) {
            return Err(CiqError::Domain {
                what: "condition number",
                value: kappa,
                domain: "(1, inf)",
            });
        }
        Self::from_pair(1.0 / kappa.sqrt(), ((kappa - 1.0) / kappa).sqrt())
    }

    fn from_pair(k: f64, k_prime: f64) -> Result<Self> {
        if k_prime <= 0.0 {
            return Err(CiqError::Domain {
                what: "elliptic modulus k",
                value: k,
                domain: "[0, 1)",
            });
        }
        Ok(Self {
            k,
            k_prime,
            k_k: FRAC_PI_2 / agm(1.0, k_prime),
            // K(k') = π / (2 AGM(1, k)).
            k_kprime: FRAC_PI_2 / agm(1.0, k),
        })
    }

    /// `(sn, cn, dn)(u | k)`.
    pub fn jacobi(&self, u: f64) -> Result<(f64, f64, f64)> {
        jacobi_with_complement(u, self.k, self.k_prime)
    }

    /// Real parts of `sn(iu|k)/i`, `cn(iu|k)`, `dn(iu|k)`.
    pub fn imaginary(&self, u: f64) -> Result<(f64, f64, f64)> {
        imaginary_with_complement(u, self.k, self.k_prime)
    }
}

/// `(sn, cn, dn)(u | k)` by the descending Landen transformation.
pub fn jacobi_elliptic(u: f64, k: f64) -> Result<(f64, f64, f64)> {
    check_modulus(k)?;
    jacobi_with_complement(u, k, complement(k))
}

/// Jacobi functions for modulus `k` with complement `kc` supplied by the
/// caller. `kc = 0` (that is, `k = 1`) is allowed and gives the hyperbolic
/// limit.
pub(crate) fn jacobi_with_complement(u: f64, k: f64, kc: f64) -> Result<(f64, f64, f64)> {
    if !u.is_finite() {
        return Err(CiqError::Domain {
            what: "argument u",
            value: u,
            domain: "finite reals",
        });
    }
    if k == 0.0 {
        return Ok((u.sin(), u.cos(), 1.0));
    }
    if kc == 0.0 {
        let sech = 1.0 / u.cosh();
        return Ok((u.tanh(), sech, sech));
    }

    let mut a = [0.0f64; LANDEN_MAX_DEPTH + 1];
    let mut c = [0.0f64; LANDEN_MAX_DEPTH + 1];
    a[0] = 1.0;
    c[0] = k;
    let mut b = kc;
    let mut n = 0;
    while c[n].abs() > AGM_TOL * a[n] {
        if n == LANDEN_MAX_DEPTH {
            return Err(CiqError::invalid(format!(
                "Landen transformation did not converge for k = {k}"
            )));
        }
        a[n + 1] = 0.5 * (a[n] + b);
        c[n + 1] = 0.5 * (a[n] - b);
        b = (a[n] * b).sqrt();
        n += 1;
    }

    let mut phi = (1u64 << n) as f64 * a[n] * u;
    for j in (1..=n).rev() {
        let s = (c[j] / a[j] * phi.sin()).clamp(-1.0, 1.0);
        phi = 0.5 * (phi + s.asin());
    }
    let (sn, cn) = phi.sin_cos();
    // dn² = k'² + k² cn² has no cancellation, unlike 1 - k² sn².
    let dn = (kc * kc + k * k * cn * cn).sqrt();
    Ok((sn, cn, dn))
}

/// `(sn(iu|k)/i, cn(iu|k), dn(iu|k))` through Jacobi's imaginary
/// transformation: `(sc, nc, dc)(u | k')`.
pub fn jacobi_imaginary(u: f64, k: f64) -> Result<(f64, f64, f64)> {
    if !(0.0..=1.0).contains(&k) {
        return Err(CiqError::Domain {
            what: "elliptic modulus k",
            value: k,
            domain: "[0, 1]",
        });
    }
    imaginary_with_complement(u, k, complement(k))
}

fn imaginary_with_complement(u: f64, k: f64, kc: f64) -> Result<(f64, f64, f64)> {
    // The roles swap: evaluate at modulus k' whose complement is k.
    let (sn, cn, dn) = jacobi_with_complement(u, kc, k)?;
    if cn.abs() < POLE_EPS {
        return Err(CiqError::EllipticSingularity { u, cn });
    }
    Ok((sn / cn, 1.0 / cn, dn / cn))
}
