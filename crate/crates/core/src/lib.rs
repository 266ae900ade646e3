//! Matrix-free square roots and inverse square roots of symmetric
//! positive-definite operators.
//!
//! `K^{1/2} b` and `K^{-1/2} b` are computed with a rational approximation
//! `K^{-1/2} ≈ Σ_q w_q (t_q I + K)^{-1}` whose shifts and weights come from a
//! conformally mapped trapezoid rule (Jacobi elliptic functions). All the
//! shifted systems are solved at once with a multi-shift MINRES that shares
//! a single Lanczos recurrence, so the cost is one MVM with `K` per iteration
//! regardless of the number of quadrature points.
//!
//! Module map:
//!
//! * [`linop`]: the [`LinearOperator`] trait and concrete operators.
//! * [`elliptic`]: complete elliptic integrals and Jacobi elliptic functions.
//! * [`lanczos`]: Lanczos tridiagonalization and extreme eigenvalue estimates.
//! * [`quadrature`]: construction of the shift/weight rule.
//! * [`msminres`]: single-shift and multi-shift MINRES.
//! * [`ciq`]: the `K^{±1/2} b` drivers, backward pass and preconditioned variants.
//! * [`precond`]: pivoted-Cholesky preconditioner with closed-form half powers.
//! * [`oracle`]: dense reference implementations for tests and benchmarks.
//! * [`apps`]: Gibbs super-resolution and a Thompson-sampling step.
//! * [`io`]: MatrixMarket, CSV points, vector text and PGM readers/writers.

pub mod apps;
pub mod ciq;
pub mod elliptic;
mod error;
pub mod io;
pub mod lanczos;
pub mod linop;
pub mod msminres;
pub mod oracle;
pub mod precond;
pub mod quadrature;
pub mod random;
pub mod vector;

pub use crate::ciq::{
    invsqrt_apply, precond_sample_rotated, precond_whiten_rotated, sqrt_apply, sqrt_backward,
    CiqOutput,
};
pub use crate::error::{CiqError, Result};
pub use crate::lanczos::{estimate_extreme_eigenvalues, SpectrumEstimate};
pub use crate::linop::LinearOperator;
pub use crate::msminres::{minres, msminres, ShiftedSolveBundle, SolverConfig};
pub use crate::quadrature::{build_rule, QuadratureRule};
