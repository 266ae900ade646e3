//! MINRES for `(K + sI) c = b` and its multi-shift variant.
//!
//! Krylov subspaces are shift-invariant, so the Lanczos vectors of `K` serve
//! every `K + t_q I` at once: only the tridiagonal diagonal changes, to
//! `α_j + t_q`. The multi-shift solver runs one Lanczos recurrence and keeps a
//! separate Givens QR of `T_J + t_q I` plus a three-term search-direction
//! recurrence per shift. Each iteration costs one MVM with `K` no matter how
//! many shifts there are.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CiqError, Result};
use crate::linop::LinearOperator;
use crate::vector::{axpy, dot, norm, scale};

/// Below this many `N × active shifts` entries per iteration the shift
/// updates run serially.
const PAR_WORK: usize = 1 << 15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverConfig {
    /// Relative residual target `‖(K + tI)c - b‖ ≤ tol·‖b‖`.
    pub tol: f64,
    /// Iteration budget `J_max`.
    pub max_iters: usize,
    /// An off-diagonal `β < breakdown_eps·‖T‖` is treated as an invariant
    /// subspace.
    pub breakdown_eps: f64,
    /// Recompute residuals explicitly after the solve (one extra MVM per shift).
    pub verify: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_iters: 400,
            breakdown_eps: 1e-12,
            verify: false,
        }
    }
}

impl SolverConfig {
    /// The looser setting `tol = 1e-3, J_max = 200`.
    pub fn relaxed() -> Self {
        Self {
            tol: 1e-3,
            max_iters: 200,
            ..Self::default()
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_verify(mut self, verify: bool) -> Self {
        self.verify = verify;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(CiqError::Domain {
                what: "tol",
                value: self.tol,
                domain: "(0, inf)",
            });
        }
        if self.max_iters == 0 {
            return Err(CiqError::invalid("max_iters must be at least 1"));
        }
        if !(self.breakdown_eps > 0.0) {
            return Err(CiqError::Domain {
                what: "breakdown_eps",
                value: self.breakdown_eps,
                domain: "(0, inf)",
            });
        }
        Ok(())
    }
}

/// Result of a single-shift MINRES solve.
#[derive(Debug, Clone)]
pub struct MinresResult {
    pub solution: Vec<f64>,
    /// Recurrence estimate of `‖(K + sI)c - b‖`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn check_rhs<O: LinearOperator + ?Sized>(op: &O, b: &[f64]) -> Result<()> {
    if b.len() != op.dim() {
        return Err(CiqError::DimensionMismatch {
            expected: op.dim(),
            actual: b.len(),
        });
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(CiqError::invalid("right-hand side has non-finite entries"));
    }
    Ok(())
}

/// MINRES on `K + shift·I`, run directly on the shifted operator. Keeps six
/// length-`N` vectors regardless of the iteration count.
pub fn minres<O: LinearOperator + ?Sized>(
    op: &O,
    b: &[f64],
    shift: f64,
    cfg: &SolverConfig,
) -> Result<MinresResult> {
    cfg.validate()?;
    check_rhs(op, b)?;
    if !(shift >= 0.0) {
        return Err(CiqError::NegativeShift(shift));
    }
    let n = op.dim();
    let beta1 = norm(b);
    if beta1 == 0.0 {
        return Ok(MinresResult {
            solution: vec![0.0; n],
            residual: 0.0,
            iterations: 0,
            converged: true,
        });
    }

    let mut x = vec![0.0; n];
    let mut r1 = b.to_vec();
    let mut r2 = b.to_vec();
    let mut w = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut v = vec![0.0; n];

    let (mut oldb, mut beta) = (0.0, beta1);
    let (mut dbar, mut epsln, mut phibar) = (0.0, 0.0, beta1);
    let (mut cs, mut sn) = (-1.0f64, 0.0f64);
    let mut t_norm = 0.0f64;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iters {
        iterations += 1;
        for (vi, yi) in v.iter_mut().zip(&r2) {
            *vi = yi / beta;
        }
        let mut y = op.shifted_apply(shift, &v)?;
        if iterations >= 2 {
            axpy(-beta / oldb, &r1, &mut y);
        }
        let alfa = dot(&v, &y);
        axpy(-alfa / beta, &r2, &mut y);
        std::mem::swap(&mut r1, &mut r2);
        r2 = y;
        oldb = beta;
        beta = norm(&r2);
        t_norm = t_norm.max(alfa.abs() + beta + oldb);

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        // w_new = (v - oldeps·w_{j-2} - delta·w_{j-1}) / gamma, written over w_{j-2}.
        for ((w1i, wi), vi) in w2.iter_mut().zip(&w).zip(&v) {
            *w1i = (vi - oldeps * *w1i - delta * wi) / gamma;
        }
        std::mem::swap(&mut w, &mut w2);
        axpy(phi, &w, &mut x);

        if phibar.abs() <= cfg.tol * beta1 {
            converged = true;
            break;
        }
        if beta <= cfg.breakdown_eps * t_norm {
            converged = true;
            break;
        }
    }

    Ok(MinresResult {
        solution: x,
        residual: phibar.abs(),
        iterations,
        converged,
    })
}

/// Per-shift solutions and diagnostics from [`msminres`].
#[derive(Debug, Clone)]
pub struct ShiftedSolveBundle {
    pub shifts: Vec<f64>,
    /// `c^{(q)} ≈ (t_q I + K)^{-1} b`.
    pub solutions: Vec<Vec<f64>>,
    /// `‖(K + t_q I)c^{(q)} - b‖`. Recurrence estimates unless the solve ran
    /// in verify mode, in which case they are recomputed explicitly.
    pub residual_norms: Vec<f64>,
    /// Recurrence residual estimates regardless of verify mode.
    pub estimated_residuals: Vec<f64>,
    /// Number of Lanczos iterations `J`.
    pub iterations: usize,
    /// MVMs with `K` spent by the solve itself (always equal to `iterations`).
    pub mvm_count: usize,
    /// Extra MVMs spent recomputing residuals in verify mode.
    pub verify_mvms: usize,
    pub converged: Vec<bool>,
    /// Iteration at which each shift met the tolerance.
    pub converged_at: Vec<Option<usize>>,
    /// `residual_history[j][q]`: residual estimate of shift `q` after iteration `j + 1`.
    pub residual_history: Vec<Vec<f64>>,
    /// Length-`N` work vectors held by the solver (3 shared plus 3 per shift).
    pub work_vectors: usize,
    pub rhs_norm: f64,
    /// Whether the Lanczos recurrence hit an invariant subspace.
    pub breakdown: bool,
}

impl ShiftedSolveBundle {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }

    /// Largest `residual / ‖b‖` over shifts.
    pub fn max_relative_residual(&self) -> f64 {
        if self.rhs_norm == 0.0 {
            return 0.0;
        }
        self.residual_norms.iter().fold(0.0f64, |m, &r| m.max(r)) / self.rhs_norm
    }

    /// `Σ_q w_q c^{(q)}`.
    pub fn combine(&self, weights: &[f64]) -> Vec<f64> {
        let n = self.solutions.first().map_or(0, Vec::len);
        let mut out = vec![0.0; n];
        for (w, c) in weights.iter().zip(&self.solutions) {
            axpy(*w, c, &mut out);
        }
        out
    }
}

struct ShiftState {
    shift: f64,
    cs: f64,
    sn: f64,
    dbar: f64,
    epsln: f64,
    phibar: f64,
    w: Vec<f64>,
    w_prev: Vec<f64>,
    x: Vec<f64>,
    converged_at: Option<usize>,
}

impl ShiftState {
    fn new(shift: f64, n: usize, beta1: f64) -> Self {
        Self {
            shift,
            cs: -1.0,
            sn: 0.0,
            dbar: 0.0,
            epsln: 0.0,
            phibar: beta1,
            w: vec![0.0; n],
            w_prev: vec![0.0; n],
            x: vec![0.0; n],
            converged_at: None,
        }
    }

    fn step(&mut self, q: &[f64], alpha: f64, beta_next: f64) {
        let alpha = alpha + self.shift;
        let oldeps = self.epsln;
        let delta = self.cs * self.dbar + self.sn * alpha;
        let gbar = self.sn * self.dbar - self.cs * alpha;
        self.epsln = self.sn * beta_next;
        self.dbar = -self.cs * beta_next;
        let gamma = gbar.hypot(beta_next).max(f64::EPSILON);
        self.cs = gbar / gamma;
        self.sn = beta_next / gamma;
        let phi = self.cs * self.phibar;
        self.phibar *= self.sn;

        for ((wp, wi), qi) in self.w_prev.iter_mut().zip(&self.w).zip(q) {
            *wp = (qi - oldeps * *wp - delta * wi) / gamma;
        }
        std::mem::swap(&mut self.w, &mut self.w_prev);
        axpy(phi, &self.w, &mut self.x);
    }
}

/// Solves `(t_q I + K) c = b` for every shift from one shared Lanczos
/// recurrence on `K`. Shifts that reach the tolerance are frozen; iteration
/// continues until all have converged or `max_iters` is reached.
pub fn msminres<O: LinearOperator + ?Sized>(
    op: &O,
    b: &[f64],
    shifts: &[f64],
    cfg: &SolverConfig,
) -> Result<ShiftedSolveBundle> {
    cfg.validate()?;
    check_rhs(op, b)?;
    if shifts.is_empty() {
        return Err(CiqError::invalid("msminres needs at least one shift"));
    }
    if let Some(&t) = shifts.iter().find(|&&t| !(t > 0.0 && t.is_finite())) {
        return Err(CiqError::NonPositiveShift(t));
    }
    let n = op.dim();
    let nq = shifts.len();
    let work_vectors = 3 + 3 * nq;
    let beta1 = norm(b);

    if beta1 == 0.0 {
        return Ok(ShiftedSolveBundle {
            shifts: shifts.to_vec(),
            solutions: vec![vec![0.0; n]; nq],
            residual_norms: vec![0.0; nq],
            estimated_residuals: vec![0.0; nq],
            iterations: 0,
            mvm_count: 0,
            verify_mvms: 0,
            converged: vec![true; nq],
            converged_at: vec![Some(0); nq],
            residual_history: Vec::new(),
            work_vectors,
            rhs_norm: 0.0,
            breakdown: false,
        });
    }

    let mut states: Vec<ShiftState> = shifts.iter().map(|&t| ShiftState::new(t, n, beta1)).collect();
    let mut q_prev = vec![0.0; n];
    let mut q: Vec<f64> = b.iter().map(|v| v / beta1).collect();
    let mut z = vec![0.0; n];
    let mut beta_prev = 0.0;
    let mut t_norm = 0.0f64;
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut breakdown = false;
    let threshold = cfg.tol * beta1;

    while iterations < cfg.max_iters {
        iterations += 1;
        op.apply_into(&q, &mut z)?;
        let alpha = dot(&q, &z);
        axpy(-alpha, &q, &mut z);
        axpy(-beta_prev, &q_prev, &mut z);
        let beta_next = norm(&z);
        t_norm = t_norm.max(alpha.abs() + beta_prev + beta_next);
        breakdown = beta_next <= cfg.breakdown_eps * t_norm;

        let active = states.iter().filter(|s| s.converged_at.is_none()).count();
        let update = |s: &mut ShiftState| {
            if s.converged_at.is_none() {
                s.step(&q, alpha, beta_next);
                if s.phibar.abs() <= threshold || breakdown {
                    s.converged_at = Some(iterations);
                }
            }
        };
        if n * active >= PAR_WORK {
            states.par_iter_mut().for_each(update);
        } else {
            states.iter_mut().for_each(update);
        }
        history.push(states.iter().map(|s| s.phibar.abs()).collect::<Vec<_>>());

        if breakdown || states.iter().all(|s| s.converged_at.is_some()) {
            break;
        }
        std::mem::swap(&mut q_prev, &mut q);
        q.copy_from_slice(&z);
        scale(1.0 / beta_next, &mut q);
        beta_prev = beta_next;
    }

    let estimated: Vec<f64> = states.iter().map(|s| s.phibar.abs()).collect();
    let mut verify_mvms = 0;
    let residual_norms = if cfg.verify {
        let mut out = Vec::with_capacity(nq);
        for s in &states {
            let r = op.shifted_apply(s.shift, &s.x)?;
            verify_mvms += 1;
            out.push(norm(&crate::vector::sub(&r, b)));
        }
        out
    } else {
        estimated.clone()
    };

    Ok(ShiftedSolveBundle {
        shifts: shifts.to_vec(),
        converged: states.iter().map(|s| s.converged_at.is_some()).collect(),
        converged_at: states.iter().map(|s| s.converged_at).collect(),
        solutions: states.into_iter().map(|s| s.x).collect(),
        residual_norms,
        estimated_residuals: estimated,
        iterations,
        mvm_count: iterations,
        verify_mvms,
        residual_history: history,
        work_vectors,
        rhs_norm: beta1,
        breakdown,
    })
}
