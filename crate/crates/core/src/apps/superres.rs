//! Gibbs sampler for multi-frame super-resolution.
//!
//! Model: `y = A x + noise` with `A = D B` (blur then decimate into several
//! shifted low-resolution frames), Gaussian likelihood with precision
//! `γ_obs` and a smoothness prior with precision `γ_prior LᵀL`. The sweep
//! alternates
//!
//! * `x | γ ~ N(m, Λ^{-1})`, `Λ = γ_obs AᵀA + γ_prior LᵀL`, `m = γ_obs Λ^{-1} Aᵀ y`,
//! * `γ_obs | x ~ Ga(1 + K M²/2, scale 2/‖y - A x‖²)`,
//! * `γ_prior | x ~ Ga(1 + (N² - 1)/2, scale 2/‖L x‖²)`.
//!
//! The mean comes from Jacobi-preconditioned CG and the fluctuation is
//! `Λ^{-1/2} ε` from CIQ.

use rand_distr::{Distribution, Gamma};
use serde::Serialize;

use super::cg::conjugate_gradient;
use crate::ciq::invsqrt_apply;
use crate::error::{CiqError, Result};
use crate::io::GrayImage;
use crate::linop::{ImageOperators, LinearOperator, MvmCounter, StencilMatrix};
use crate::msminres::SolverConfig;
use crate::quadrature::APP_Q;
use crate::random::{self, Rng};
use crate::vector::{dot, norm, sub};

#[derive(Debug, Clone)]
pub struct SuperResConfig {
    pub n_high: usize,
    pub n_low: usize,
    pub n_images: usize,
    pub sweeps: usize,
    pub burn_in: usize,
    pub q: usize,
    pub solver: SolverConfig,
    pub cg_tol: f64,
    pub cg_max_iters: usize,
    /// Standard deviation of the simulated observation noise in `[0, 1]`
    /// pixel units. The default is one 8-bit grey level.
    pub noise_std: f64,
    /// Replace the Gaussian blur by the identity.
    pub identity_blur: bool,
    /// Initial `(γ_obs, γ_prior)`; `None` derives them from the data.
    pub initial_gammas: Option<(f64, f64)>,
    /// Keep the initial γ's fixed instead of sampling them.
    pub fixed_gammas: bool,
    pub seed: u64,
}

impl Default for SuperResConfig {
    fn default() -> Self {
        Self {
            n_high: 32,
            n_low: 16,
            n_images: 4,
            sweeps: 300,
            burn_in: 60,
            q: APP_Q,
            solver: SolverConfig::default().with_tol(1e-3),
            cg_tol: 1e-3,
            cg_max_iters: 1000,
            noise_std: 1.0 / 255.0,
            identity_blur: false,
            initial_gammas: None,
            fixed_gammas: false,
            seed: 0,
        }
    }
}

/// Observation operators and data.
#[derive(Debug, Clone)]
pub struct SuperResModel {
    pub ops: ImageOperators,
    /// `A = D B` as an explicit sparse matrix.
    pub a: StencilMatrix,
    /// Stacked low-resolution observations, frame by frame.
    pub y: Vec<f64>,
}

impl SuperResModel {
    pub fn new(ops: ImageOperators, y: Vec<f64>) -> Result<Self> {
        if y.len() != ops.obs_len() {
            return Err(CiqError::DimensionMismatch {
                expected: ops.obs_len(),
                actual: y.len(),
            });
        }
        let a = ops.observation_matrix();
        Ok(Self { ops, a, y })
    }

    /// Simulates `y = A x_true + σ ε`.
    pub fn simulate(ops: ImageOperators, truth: &[f64], noise_std: f64, rng: &mut Rng) -> Result<Self> {
        if truth.len() != ops.high_len() {
            return Err(CiqError::DimensionMismatch {
                expected: ops.high_len(),
                actual: truth.len(),
            });
        }
        let a = ops.observation_matrix();
        let mut y = a.apply(truth);
        let eps = random::standard_normal_vec(rng, y.len());
        for (yi, e) in y.iter_mut().zip(eps) {
            *yi += noise_std * e;
        }
        Ok(Self { ops, a, y })
    }

    pub fn observe(&self, x: &[f64]) -> Vec<f64> {
        self.a.apply(x)
    }

    /// `(‖y - A x‖², ‖L x‖²)`.
    pub fn energies(&self, x: &[f64]) -> (f64, f64) {
        let r = sub(&self.y, &self.observe(x));
        let lx = self.ops.laplacian.apply(x);
        (dot(&r, &r), dot(&lx, &lx))
    }

    pub fn precision(&self, gamma_obs: f64, gamma_prior: f64) -> Result<PrecisionOperator<'_>> {
        PrecisionOperator::new(self, gamma_obs, gamma_prior)
    }

    /// Nearest-neighbour upsampling of the first frame.
    pub fn nearest_neighbor_baseline(&self) -> Vec<f64> {
        let (n, m) = (self.ops.n_high, self.ops.n_low);
        let f = n / m;
        (0..n * n)
            .map(|p| {
                let (r, c) = (p / n, p % n);
                self.y[(r / f) * m + c / f]
            })
            .collect()
    }
}

/// `Λ = γ_obs AᵀA + γ_prior LᵀL`.
pub struct PrecisionOperator<'a> {
    model: &'a SuperResModel,
    gamma_obs: f64,
    gamma_prior: f64,
    counter: MvmCounter,
}

impl<'a> PrecisionOperator<'a> {
    pub fn new(model: &'a SuperResModel, gamma_obs: f64, gamma_prior: f64) -> Result<Self> {
        for (what, g) in [("gamma_obs", gamma_obs), ("gamma_prior", gamma_prior)] {
            if !(g > 0.0 && g.is_finite()) {
                return Err(CiqError::Domain {
                    what,
                    value: g,
                    domain: "(0, inf)",
                });
            }
        }
        Ok(Self {
            model,
            gamma_obs,
            gamma_prior,
            counter: MvmCounter::new(),
        })
    }
}

impl LinearOperator for PrecisionOperator<'_> {
    fn dim(&self) -> usize {
        self.model.ops.high_len()
    }

    fn matvec(&self, x: &[f64], out: &mut [f64]) {
        let ata = self.model.a.apply_transpose(&self.model.a.apply(x));
        let l = &self.model.ops.laplacian;
        let ltl = l.apply_transpose(&l.apply(x));
        for ((o, a), b) in out.iter_mut().zip(ata).zip(ltl) {
            *o = self.gamma_obs * a + self.gamma_prior * b;
        }
    }

    fn mvm_counter(&self) -> &MvmCounter {
        &self.counter
    }

    fn diagonal(&self) -> Option<Vec<f64>> {
        let da = self.model.a.gram_diagonal();
        let dl = self.model.ops.laplacian.gram_diagonal();
        Some(
            da.iter()
                .zip(dl)
                .map(|(a, l)| self.gamma_obs * a + self.gamma_prior * l)
                .collect(),
        )
    }
}

#[derive(Debug, Clone)]
pub struct GibbsChainState {
    pub x: Vec<f64>,
    pub gamma_obs: f64,
    pub gamma_prior: f64,
    pub step_index: usize,
}

/// Diagnostics from one x-update.
#[derive(Debug, Clone)]
pub struct XStep {
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub cg_iterations: usize,
    pub ciq_iterations: usize,
    pub ciq_converged: bool,
}

/// Draws `x ~ N(m, Λ^{-1})` as `m + Λ^{-1/2} ε`.
pub fn gibbs_x_step(
    model: &SuperResModel,
    state: &GibbsChainState,
    cfg: &SuperResConfig,
    rng: &mut Rng,
) -> Result<XStep> {
    let lambda = model.precision(state.gamma_obs, state.gamma_prior)?;
    let rhs: Vec<f64> = model
        .a
        .apply_transpose(&model.y)
        .iter()
        .map(|v| state.gamma_obs * v)
        .collect();
    let cg = conjugate_gradient(&lambda, &rhs, cfg.cg_tol, cfg.cg_max_iters, true)?;
    let eps = random::standard_normal_vec(rng, lambda.dim());
    let fluct = invsqrt_apply(&lambda, &eps, cfg.q, &cfg.solver, None)?;
    let x = cg.solution.iter().zip(&fluct.result).map(|(m, z)| m + z).collect();
    Ok(XStep {
        x,
        mean: cg.solution,
        cg_iterations: cg.iterations,
        ciq_iterations: fluct.iterations(),
        ciq_converged: fluct.converged,
    })
}

/// Energies at or below `DEGENERATE_REL²` times the squared data scale are
/// rounding noise and treated as zero.
const DEGENERATE_REL: f64 = 1e-12;

/// Draws `(γ_obs, γ_prior)` given `x`.
pub fn gibbs_gamma_steps(model: &SuperResModel, x: &[f64], rng: &mut Rng) -> Result<(f64, f64)> {
    let (res2, lap2) = model.energies(x);
    let tiny = |scale2: f64| DEGENERATE_REL * DEGENERATE_REL * scale2;
    if !(res2 > tiny(dot(&model.y, &model.y))) {
        return Err(CiqError::DegenerateScale("observation residual ‖y - Ax‖²"));
    }
    if !(lap2 > tiny(dot(x, x))) {
        return Err(CiqError::DegenerateScale("prior energy ‖Lx‖²"));
    }
    let k = model.ops.n_images as f64;
    let m2 = (model.ops.n_low * model.ops.n_low) as f64;
    let n2 = model.ops.high_len() as f64;
    let g_obs = Gamma::new(1.0 + k * m2 / 2.0, 2.0 / res2)
        .map_err(|e| CiqError::invalid(format!("gamma_obs distribution: {e}")))?;
    let g_prior = Gamma::new(1.0 + (n2 - 1.0) / 2.0, 2.0 / lap2)
        .map_err(|e| CiqError::invalid(format!("gamma_prior distribution: {e}")))?;
    Ok((g_obs.sample(rng), g_prior.sample(rng)))
}

/// Per-sweep diagnostics, one JSON line each.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRecord {
    pub step: usize,
    pub gamma_obs: f64,
    pub gamma_prior: f64,
    /// `‖y - A x‖ / ‖y‖` after the sweep.
    pub residual: f64,
    pub cg_iterations: usize,
    pub solver_iterations: usize,
    pub solver_converged: bool,
}

#[derive(Debug, Clone)]
pub struct SuperResSummary {
    pub posterior_mean: Vec<f64>,
    pub baseline: Vec<f64>,
    pub psnr_posterior: f64,
    pub psnr_baseline: f64,
    pub log: Vec<SweepRecord>,
    pub final_state: GibbsChainState,
    pub min_gamma_obs: f64,
    pub min_gamma_prior: f64,
}

/// Peak signal-to-noise ratio for images in `[0, 1]`.
pub fn psnr(estimate: &[f64], truth: &[f64]) -> f64 {
    let mse = dot(&sub(estimate, truth), &sub(estimate, truth)) / truth.len() as f64;
    -10.0 * mse.log10()
}

/// Runs the sweep on a simulated data set from `truth` (`n_high²` pixels)
/// and averages `x` after burn-in.
pub fn run_superres(truth: &[f64], cfg: &SuperResConfig) -> Result<SuperResSummary> {
    if cfg.burn_in >= cfg.sweeps {
        return Err(CiqError::invalid(format!(
            "burn-in ({}) must be smaller than the number of sweeps ({})",
            cfg.burn_in, cfg.sweeps
        )));
    }
    let mut ops = ImageOperators::new(cfg.n_high, cfg.n_low, cfg.n_images)?;
    if cfg.identity_blur {
        ops = ops.without_blur();
    }
    let mut rng = random::rng(cfg.seed);
    let model = SuperResModel::simulate(ops, truth, cfg.noise_std, &mut rng)?;
    let baseline = model.nearest_neighbor_baseline();

    let (g_obs0, g_prior0) = match cfg.initial_gammas {
        Some(g) => g,
        None => {
            let (_, lap2) = model.energies(&baseline);
            let g_obs = if cfg.noise_std > 0.0 { 1.0 / (cfg.noise_std * cfg.noise_std) } else { 1e6 };
            (g_obs, model.ops.high_len() as f64 / lap2.max(f64::MIN_POSITIVE))
        }
    };
    let mut state = GibbsChainState {
        x: baseline.clone(),
        gamma_obs: g_obs0,
        gamma_prior: g_prior0,
        step_index: 0,
    };

    let mut sum = vec![0.0; state.x.len()];
    let mut kept = 0usize;
    let mut log = Vec::with_capacity(cfg.sweeps);
    let (mut min_obs, mut min_prior) = (f64::INFINITY, f64::INFINITY);
    let yn = norm(&model.y).max(f64::MIN_POSITIVE);

    for step in 1..=cfg.sweeps {
        let xs = gibbs_x_step(&model, &state, cfg, &mut rng)?;
        if xs.x.iter().any(|v| !v.is_finite()) {
            return Err(CiqError::invalid(format!("non-finite image at sweep {step}")));
        }
        state.x = xs.x;
        if !cfg.fixed_gammas {
            let (go, gp) = gibbs_gamma_steps(&model, &state.x, &mut rng)?;
            state.gamma_obs = go;
            state.gamma_prior = gp;
        }
        state.step_index = step;
        min_obs = min_obs.min(state.gamma_obs);
        min_prior = min_prior.min(state.gamma_prior);
        if step > cfg.burn_in {
            for (s, v) in sum.iter_mut().zip(&state.x) {
                *s += v;
            }
            kept += 1;
        }
        log.push(SweepRecord {
            step,
            gamma_obs: state.gamma_obs,
            gamma_prior: state.gamma_prior,
            residual: norm(&sub(&model.y, &model.observe(&state.x))) / yn,
            cg_iterations: xs.cg_iterations,
            solver_iterations: xs.ciq_iterations,
            solver_converged: xs.ciq_converged,
        });
    }

    let posterior_mean: Vec<f64> = sum.iter().map(|s| s / kept as f64).collect();
    Ok(SuperResSummary {
        psnr_posterior: psnr(&posterior_mean, truth),
        psnr_baseline: psnr(&baseline, truth),
        posterior_mean,
        baseline,
        log,
        final_state: state,
        min_gamma_obs: min_obs,
        min_gamma_prior: min_prior,
    })
}

/// Reads the truth image, runs the chain and writes the posterior mean as PGM
/// and the sweep log as JSON lines.
pub fn run_superres_files(
    truth_path: &std::path::Path,
    out_pgm: &std::path::Path,
    log_path: Option<&std::path::Path>,
    cfg: &SuperResConfig,
) -> Result<SuperResSummary> {
    let img = crate::io::read_pgm(truth_path)?;
    if img.width != img.height || img.width != cfg.n_high {
        return Err(CiqError::File {
            path: truth_path.to_path_buf(),
            source: Box::new(CiqError::invalid(format!(
                "expected a {n}x{n} image, got {}x{}",
                img.width,
                img.height,
                n = cfg.n_high
            ))),
        });
    }
    let summary = run_superres(&img.pixels, cfg)?;
    let out = GrayImage::new(cfg.n_high, cfg.n_high, summary.posterior_mean.clone())?;
    crate::io::write_pgm_file(out_pgm, &out)?;
    if let Some(p) = log_path {
        crate::io::write_jsonl_file(p, &summary.log)?;
    }
    Ok(summary)
}

/// Deterministic `n × n` test scene in `[0, 1]`: a smooth background with a
/// bright disc, a dark square and a diagonal bar.
pub fn test_scene(n: usize) -> Vec<f64> {
    let s = n as f64;
    (0..n * n)
        .map(|p| {
            let (r, c) = ((p / n) as f64 / s, (p % n) as f64 / s);
            let mut v = 0.25 + 0.2 * r + 0.1 * (6.0 * c).sin();
            if (r - 0.35).powi(2) + (c - 0.3).powi(2) < 0.04 {
                v = 0.9;
            }
            if (0.6..0.85).contains(&r) && (0.55..0.8).contains(&c) {
                v = 0.1;
            }
            if (r + c - 1.0).abs() < 0.05 && c > 0.6 {
                v = 0.75;
            }
            v.clamp(0.0, 1.0)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_scale_degenerate() {
        let ops = ImageOperators::new(4, 2, 1).unwrap();
        let x = vec![0.5; 16];
        let model = SuperResModel::new(ops.clone(), ops.observe(&x)).unwrap();
        let mut rng = random::rng(0);
        assert!(matches!(
            gibbs_gamma_steps(&model, &x, &mut rng),
            Err(CiqError::DegenerateScale(_))
        ));
    }

    #[test]
    fn precision_rejects_nonpositive_gamma() {
        let ops = ImageOperators::new(4, 2, 1).unwrap();
        let model = SuperResModel::new(ops, vec![0.0; 4]).unwrap();
        assert!(model.precision(0.0, 1.0).is_err());
        assert!(model.precision(1.0, -1.0).is_err());
    }

    #[test]
    fn baseline_replicates_pixels() {
        let ops = ImageOperators::new(4, 2, 1).unwrap();
        let model = SuperResModel::new(ops, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = model.nearest_neighbor_baseline();
        assert_eq!(&b[..4], &[1.0, 1.0, 2.0, 2.0]);
        assert_eq!(&b[12..], &[3.0, 3.0, 4.0, 4.0]);
    }
}
