//! The noise-matched iterative MAP denoiser, the naive MAP-targeting
//! iteration used for diagnosis, and pluggable denoiser handles.

mod denoiser;
pub mod external;

pub use denoiser::{CountingDenoiser, Denoiser, DenoiserHandle, DenoiserKind, FnDenoiser};
pub use external::ExternalDenoiser;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::GmmPrior;
use crate::grid::Field;
use crate::schedule::{build_schedule, pesme_schedule, solve_beta, tau_from_multiplier, Schedule};

/// Horizon used for the naive MAP iteration in diagnostics.
pub const NAIVE_DEFAULT_STEPS: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProximapConfig {
    pub tau_mul: f64,
    /// Number of denoiser calls K.
    pub steps: usize,
    /// Target σ_K; must lie in (0, σ_y).
    pub sigma_final: f64,
    /// Return `D(x_{K−1}, σ_{K−1})` rather than the noisy iterate `x_K`.
    pub return_last_mmse: bool,
}

impl Default for ProximapConfig {
    fn default() -> Self {
        Self { tau_mul: 10.0, steps: 8, sigma_final: 0.005, return_last_mmse: true }
    }
}

impl ProximapConfig {
    pub fn with_steps(steps: usize, sigma_final: f64) -> Self {
        Self { steps, sigma_final, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_mul > 1.0) {
            return Err(Error::domain(format!("tau_mul must exceed 1, got {}", self.tau_mul)));
        }
        if self.steps == 0 {
            return Err(Error::domain("ProxiMAP needs at least one step"));
        }
        if !(self.sigma_final > 0.0) {
            return Err(Error::domain(format!("sigma_final must be > 0, got {}", self.sigma_final)));
        }
        Ok(())
    }
}

/// τ and the β-solved schedule for measurement noise `sigma_y`.
pub fn proximap_schedule(sigma_y: f64, cfg: &ProximapConfig) -> Result<Schedule> {
    cfg.validate()?;
    let tau = tau_from_multiplier(cfg.tau_mul, sigma_y)?;
    let beta = solve_beta(sigma_y, tau, cfg.steps, cfg.sigma_final)?;
    build_schedule(sigma_y, tau, beta, cfg.steps)
}

/// Noise-matched MAP denoising of `y` (noise std `sigma_y`) with K denoiser calls.
///
/// Iterates `x_{k+1} = (1−β) x_k + γ_k y + (τγ_k/σ_k²) D(x_k, σ_k)` from `x_0 = y`
/// along the β-solved schedule. With K = 1 and `return_last_mmse` the result is
/// `D(y, σ_y)` whatever β is, so no schedule is solved.
pub fn proximap_denoise(y: &Field, sigma_y: f64, denoiser: &dyn Denoiser, cfg: &ProximapConfig) -> Result<Field> {
    cfg.validate()?;
    if !(sigma_y > 0.0) || !sigma_y.is_finite() {
        return Err(Error::domain(format!("sigma_y must be > 0, got {sigma_y}")));
    }
    if cfg.steps == 1 && cfg.return_last_mmse {
        return denoiser.denoise(y, sigma_y);
    }
    let schedule = proximap_schedule(sigma_y, cfg)?;
    run_schedule(y, &schedule, denoiser, cfg.return_last_mmse)
}

/// Runs the iterate recursion along a prebuilt schedule.
pub fn run_schedule(y: &Field, schedule: &Schedule, denoiser: &dyn Denoiser, return_last_mmse: bool) -> Result<Field> {
    let steps = schedule.steps();
    let mut x = y.clone();
    for k in 0..steps {
        let sigma = schedule.sigma()[k];
        let estimate = denoiser.denoise(&x, sigma)?;
        if return_last_mmse && k + 1 == steps {
            return Ok(estimate);
        }
        let c = schedule.coefficients(k);
        let mut next = x.scaled(c.carry);
        next.axpy(c.anchor, y);
        next.axpy(c.pull, &estimate);
        if !next.is_finite() {
            return Err(Error::Divergence { iteration: k, context: "ProxiMAP iterate".into() });
        }
        x = next;
    }
    Ok(x)
}

/// Smoothed gradient descent on `½‖x − y‖² − τ log p(x)` with the decreasing
/// schedule `σ_k² = τ/(k+1)`, `γ_k = 1/(k+2)`, written through the posterior
/// mean: `x_{k+1} = y/(k+2) + (k+1)/(k+2)·D(x_k, σ_k)`.
///
/// Returns the full trace `[x_0 = y, …, x_K]`.
pub fn naive_map_iterate(y: &Field, sigma_y: f64, tau: f64, steps: usize, denoiser: &dyn Denoiser) -> Result<Vec<Field>> {
    if !(sigma_y > 0.0) {
        return Err(Error::domain(format!("sigma_y must be > 0, got {sigma_y}")));
    }
    let mut trace = Vec::with_capacity(steps + 1);
    trace.push(y.clone());
    if steps == 0 {
        return Ok(trace);
    }
    let schedule = pesme_schedule(tau, steps)?;
    for k in 0..steps {
        let x = &trace[k];
        let estimate = denoiser.denoise(x, schedule.sigma[k])?;
        let g = schedule.gamma[k];
        let next = Field::linear_combination(&[(g, y), (1.0 - g, &estimate)]);
        if !next.is_finite() {
            return Err(Error::Divergence { iteration: k, context: "naive MAP iterate".into() });
        }
        trace.push(next);
    }
    Ok(trace)
}

/// Exact residual-noise standard deviation of each ProxiMAP iterate for a
/// single-Gaussian prior, where the denoiser is affine and the noise part of
/// `x_k` stays a scalar multiple of the measurement noise.
///
/// Returns `(exact, schedule)`: exact residual std of `x_0..x_K` and the
/// schedule's σ_0..σ_K.
pub fn residual_noise_oracle(prior: &GmmPrior, cfg: &ProximapConfig, sigma_y: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if prior.n_components() != 1 {
        return Err(Error::domain("residual-noise oracle needs a single-component prior"));
    }
    let schedule = proximap_schedule(sigma_y, cfg)?;
    let s2 = prior.s2();
    // noise coefficient n_k: x_k = (deterministic part) + n_k · (σ_y ε)
    let mut n = 1.0;
    let mut exact = vec![sigma_y];
    for k in 0..schedule.steps() {
        let sigma = schedule.sigma()[k];
        let shrink = s2 / (s2 + sigma * sigma);
        let c = schedule.coefficients(k);
        n = c.carry * n + c.anchor + c.pull * shrink * n;
        exact.push(sigma_y * n.abs());
    }
    Ok((exact, schedule.sigma().to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::ScoreBias;
    use crate::grid::{Rng, Shape};
    use std::sync::Arc;

    fn single_gaussian(shape: Shape, s2: f64) -> (GmmPrior, Field) {
        let mu = Field::from_fn(shape, |r, c, _| 0.3 + 0.05 * (r as f64) - 0.02 * c as f64);
        (GmmPrior::uniform(vec![mu.clone()], s2).unwrap(), mu)
    }

    #[test]
    fn single_step_is_mmse() {
        let shape = Shape::new(4, 4, 1).unwrap();
        let (p, _) = single_gaussian(shape, 0.01);
        let d = DenoiserHandle::exact(Arc::new(p.clone()));
        let y = Field::filled(shape, 0.8);
        let out = proximap_denoise(&y, 0.1, &d, &ProximapConfig::with_steps(1, 0.001)).unwrap();
        assert_eq!(out, p.mmse_denoise(&y, 0.1, ScoreBias::EXACT).unwrap());
    }

    #[test]
    fn exactly_k_denoiser_calls() {
        let shape = Shape::new(4, 4, 1).unwrap();
        let (p, _) = single_gaussian(shape, 0.01);
        let d = DenoiserHandle::exact(Arc::new(p));
        let y = Field::filled(shape, 0.8);
        for (k, last) in [(1, true), (3, true), (8, false), (8, true), (16, true)] {
            let counter = CountingDenoiser::new(&d);
            let cfg = ProximapConfig { return_last_mmse: last, ..ProximapConfig::with_steps(k, 0.01) };
            proximap_denoise(&y, 0.1, &counter, &cfg).unwrap();
            assert_eq!(counter.calls(), k);
        }
    }

    /// Affine propagation x_k = p_k y + q_k μ with an independently built schedule.
    #[test]
    fn affine_prior_matches_symbolic_composition() {
        let shape = Shape::new(4, 4, 1).unwrap();
        let s2 = 0.02;
        let (p, mu) = single_gaussian(shape, s2);
        let d = DenoiserHandle::exact(Arc::new(p));
        let mut rng = Rng::new(5);
        let y = Field::from_fn(shape, |_, _, _| rng.uniform());
        let sigma_y = 0.2;
        for (steps, last) in [(8, true), (8, false), (3, true)] {
            let cfg = ProximapConfig { return_last_mmse: last, ..ProximapConfig::with_steps(steps, 0.01) };
            let out = proximap_denoise(&y, sigma_y, &d, &cfg).unwrap();

            let tau = cfg.tau_mul * sigma_y * sigma_y / 4.0;
            let beta = solve_beta(sigma_y, tau, steps, cfg.sigma_final).unwrap();
            let (mut sigma, mut pc, mut qc) = (sigma_y, 1.0, 0.0);
            let mut result = None;
            for k in 0..steps {
                let gamma = beta / (1.0 + tau / (sigma * sigma));
                let rho = s2 / (s2 + sigma * sigma);
                // D(x) = ρ x + (1 − ρ) μ
                let (dp, dq) = (rho * pc, rho * qc + 1.0 - rho);
                if last && k + 1 == steps {
                    result = Some((dp, dq));
                    break;
                }
                let carry = 1.0 - gamma * (1.0 + tau / (sigma * sigma));
                let pull = tau * gamma / (sigma * sigma);
                pc = carry * pc + gamma + pull * dp;
                qc = carry * qc + pull * dq;
                sigma = carry * sigma + gamma * sigma_y;
            }
            let (pf, qf) = result.unwrap_or((pc, qc));
            let expected = Field::linear_combination(&[(pf, &y), (qf, &mu)]);
            assert!(out.max_abs_diff(&expected) < 1e-12, "K={steps}: {}", out.max_abs_diff(&expected));
        }
    }

    /// The schedule treats denoiser outputs as noiseless, so the limit is the
    /// prox only when the prior is sharper than σ_final (here s = 1e-5 < 1e-4).
    #[test]
    fn converges_to_closed_form_prox() {
        let shape = Shape::new(2, 2, 1).unwrap();
        let s2 = 1e-10;
        let (p, mu) = single_gaussian(shape, s2);
        let d = DenoiserHandle::exact(Arc::new(p));
        let y = Field::from_fn(shape, |r, c, _| 0.9 - 0.1 * (r + c) as f64);
        let sigma_y = 0.1;
        for last in [true, false] {
            let cfg = ProximapConfig { return_last_mmse: last, ..ProximapConfig::with_steps(64, 1e-4) };
            let tau = cfg.tau_mul * sigma_y * sigma_y / 4.0;
            let out = proximap_denoise(&y, sigma_y, &d, &cfg).unwrap();
            let prox = y.scaled(s2).add(&mu.scaled(tau)).scaled(1.0 / (s2 + tau));
            assert!(out.max_abs_diff(&prox) < 1e-3, "{}", out.max_abs_diff(&prox));
        }
    }

    #[test]
    fn infeasible_target_is_reported() {
        let shape = Shape::new(2, 2, 1).unwrap();
        let (p, _) = single_gaussian(shape, 0.01);
        let d = DenoiserHandle::exact(Arc::new(p));
        let y = Field::filled(shape, 0.5);
        let r = proximap_denoise(&y, 0.1, &d, &ProximapConfig::with_steps(2, 1e-9));
        assert!(matches!(r, Err(Error::InfeasibleTarget(_))));
        let r = proximap_denoise(&y, 0.1, &d, &ProximapConfig::with_steps(2, 0.2));
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn denoiser_failure_propagates() {
        let y = Field::filled(Shape::new(2, 2, 1).unwrap(), 0.5);
        let failing = FnDenoiser(|_: &Field, _: f64| Err(Error::Denoiser("boom".into())));
        let r = proximap_denoise(&y, 0.1, &failing, &ProximapConfig::default());
        assert!(matches!(r, Err(Error::Denoiser(_))));
    }

    #[test]
    fn naive_trace_lengths() {
        let shape = Shape::new(2, 2, 1).unwrap();
        let (p, _) = single_gaussian(shape, 0.01);
        let d = DenoiserHandle::exact(Arc::new(p));
        let y = Field::filled(shape, 0.5);
        assert_eq!(naive_map_iterate(&y, 0.1, 0.01, 0, &d).unwrap(), vec![y.clone()]);
        assert_eq!(naive_map_iterate(&y, 0.1, 0.01, 7, &d).unwrap().len(), 8);
    }

    #[test]
    fn naive_matches_general_gradient_form() {
        // x_{k+1} = x_k − γ_k ((x_k − y) − τ ∇log p_σk(x_k))
        let shape = Shape::new(2, 2, 1).unwrap();
        let means = vec![Field::filled(shape, 0.2), Field::filled(shape, 0.7)];
        let p = GmmPrior::uniform(means, 0.01).unwrap();
        let d = DenoiserHandle::exact(Arc::new(p.clone()));
        let y = Field::from_fn(shape, |r, c, _| 0.3 + 0.1 * (r + c) as f64);
        let tau = 0.04;
        let trace = naive_map_iterate(&y, 0.2, tau, 20, &d).unwrap();
        let mut x = y.clone();
        for k in 0..20 {
            let sigma = (tau / (k + 1) as f64).sqrt();
            let gamma = 1.0 / (k + 2) as f64;
            let score = p.score_smoothed(&x, sigma, ScoreBias::EXACT).unwrap();
            let grad = x.sub(&y).sub(&score.scaled(tau));
            x.axpy(-gamma, &grad);
            assert!(x.max_abs_diff(&trace[k + 1]) < 1e-12);
        }
    }

    #[test]
    fn naive_with_exact_score_reaches_map() {
        let shape = Shape::new(2, 2, 1).unwrap();
        let s = 0.01;
        let means = vec![Field::filled(shape, 0.2), Field::filled(shape, 0.8)];
        let p = GmmPrior::uniform(means, s * s).unwrap();
        let d = DenoiserHandle::exact(Arc::new(p.clone()));
        let sigma_y = 0.1;
        let mut rng = Rng::new(3);
        for _ in 0..10 {
            let y = Field::from_fn(shape, |_, _, _| 0.2 + sigma_y * rng.normal());
            let tau = sigma_y * sigma_y;
            let trace = naive_map_iterate(&y, sigma_y, tau, NAIVE_DEFAULT_STEPS, &d).unwrap();
            let map = p.map_oracle(&y, sigma_y, tau, 2).unwrap();
            assert!(trace.last().unwrap().dist_sq(&map).sqrt() < 5.0 * s);
        }
    }

    #[test]
    fn residual_oracle_tracks_schedule_for_sharp_prior() {
        let shape = Shape::new(2, 2, 1).unwrap();
        let sigma_y = 0.1;
        let (p, _) = single_gaussian(shape, 1e-6 * sigma_y * sigma_y);
        let cfg = ProximapConfig::with_steps(8, 0.01);
        let (exact, sched) = residual_noise_oracle(&p, &cfg, sigma_y).unwrap();
        assert_eq!(exact[0], sigma_y);
        assert_eq!(sched[0], sigma_y);
        for (e, s) in exact.iter().zip(&sched) {
            assert!((e / s - 1.0).abs() < 0.02, "{e} vs {s}");
        }
    }

    #[test]
    fn residual_oracle_rejects_mixtures() {
        let shape = Shape::new(1, 1, 1).unwrap();
        let p = GmmPrior::uniform(vec![Field::zeros(shape), Field::filled(shape, 1.0)], 0.01).unwrap();
        assert!(matches!(residual_noise_oracle(&p, &ProximapConfig::default(), 0.1), Err(Error::Domain(_))));
    }
}
