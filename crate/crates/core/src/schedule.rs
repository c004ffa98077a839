//! Noise-level and step-size schedules.
//!
//! The matched schedule advances `σ_{k+1} = (1 − β) σ_k + γ_k σ_y` with
//! `γ_k = β / (1 + τ/σ_k²)`. `(1 − β)` is exactly the carry coefficient
//! `1 − γ_k (1 + τ/σ_k²)` of the iterate update, so the same three coefficients
//! drive both the iterate and its residual noise level.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A validated noise/step schedule σ_0..σ_K, γ_0..γ_{K−1}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    sigma: Vec<f64>,
    gamma: Vec<f64>,
    tau: f64,
    beta: f64,
    sigma_y: f64,
}

/// Coefficients of `x_{k+1} = carry·x_k + anchor·x_0 + pull·x̂_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateCoefficients {
    pub carry: f64,
    pub anchor: f64,
    pub pull: f64,
}

impl Schedule {
    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn sigma_y(&self) -> f64 {
        self.sigma_y
    }

    /// Number of steps K.
    pub fn steps(&self) -> usize {
        self.gamma.len()
    }

    pub fn sigma_final(&self) -> f64 {
        *self.sigma.last().expect("non-empty schedule")
    }

    /// Coefficients for step `k`, with the carry term written as `1 − β`.
    pub fn coefficients(&self, k: usize) -> UpdateCoefficients {
        let gamma = self.gamma[k];
        let sigma = self.sigma[k];
        UpdateCoefficients { carry: 1.0 - self.beta, anchor: gamma, pull: self.tau * gamma / (sigma * sigma) }
    }

    /// `1 − γ_k (1 + τ/σ_k²)` evaluated literally, for consistency checks.
    pub fn literal_carry(&self, k: usize) -> f64 {
        let sigma = self.sigma[k];
        1.0 - self.gamma[k] * (1.0 + self.tau / (sigma * sigma))
    }

    /// CSV rows `k,sigma_k,gamma_k`; the last row has an empty γ.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,sigma_k,gamma_k\n");
        for (k, s) in self.sigma.iter().enumerate() {
            match self.gamma.get(k) {
                Some(g) => out.push_str(&format!("{k},{s},{g}\n")),
                None => out.push_str(&format!("{k},{s},\n")),
            }
        }
        out
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be finite and > 0, got {v}")))
    }
}

fn open_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must lie in (0, 1), got {v}")))
    }
}

/// `τ = τ_mul · σ_y² / 4`; requires `τ_mul > 1` so that σ_k → 0.
pub fn tau_from_multiplier(tau_mul: f64, sigma_y: f64) -> Result<f64> {
    if !(tau_mul > 1.0) || !tau_mul.is_finite() {
        return Err(Error::domain(format!(
            "tau multiplier must exceed 1 (the schedule stalls otherwise), got {tau_mul}"
        )));
    }
    positive("sigma_y", sigma_y)?;
    Ok(tau_mul * sigma_y * sigma_y / 4.0)
}

/// One schedule step: returns `(σ_{k+1}, γ_k)`.
pub fn sigma_step(sigma_k: f64, sigma_y: f64, tau: f64, beta: f64) -> Result<(f64, f64)> {
    positive("sigma_k", sigma_k)?;
    positive("sigma_y", sigma_y)?;
    positive("tau", tau)?;
    open_unit("beta", beta)?;
    Ok(step_unchecked(sigma_k, sigma_y, tau, beta))
}

#[inline]
fn step_unchecked(sigma_k: f64, sigma_y: f64, tau: f64, beta: f64) -> (f64, f64) {
    let gamma = beta / (1.0 + tau / (sigma_k * sigma_k));
    ((1.0 - beta) * sigma_k + gamma * sigma_y, gamma)
}

/// Iterates [`sigma_step`] K times from `σ_0 = σ_y`.
pub fn build_schedule(sigma_y: f64, tau: f64, beta: f64, steps: usize) -> Result<Schedule> {
    positive("sigma_y", sigma_y)?;
    positive("tau", tau)?;
    open_unit("beta", beta)?;
    if steps == 0 {
        return Err(Error::domain("schedule needs at least one step"));
    }
    let mut sigma = Vec::with_capacity(steps + 1);
    let mut gamma = Vec::with_capacity(steps);
    sigma.push(sigma_y);
    for k in 0..steps {
        if !(sigma[k] > 0.0) {
            return Err(Error::domain(format!("sigma underflowed to zero at step {k}")));
        }
        let (next, g) = step_unchecked(sigma[k], sigma_y, tau, beta);
        sigma.push(next);
        gamma.push(g);
    }
    Ok(Schedule { sigma, gamma, tau, beta, sigma_y })
}

/// σ_K as a function of β, without allocating.
fn final_sigma(sigma_y: f64, tau: f64, beta: f64, steps: usize) -> f64 {
    let mut s = sigma_y;
    for _ in 0..steps {
        s = step_unchecked(s, sigma_y, tau, beta).0;
    }
    s
}

const BETA_MAX: f64 = 1.0 - 1e-12;
const BISECTION_TOL: f64 = 1e-10;
const BISECTION_MAX: usize = 200;

/// Bisection for the β whose schedule ends at `sigma_final_target`.
///
/// σ_K is decreasing in β when `τ > σ_y²/4`; a 16-point grid check confirms
/// that ordering before bisecting.
pub fn solve_beta(sigma_y: f64, tau: f64, steps: usize, sigma_final_target: f64) -> Result<f64> {
    positive("sigma_y", sigma_y)?;
    positive("tau", tau)?;
    if steps == 0 {
        return Err(Error::domain("schedule needs at least one step"));
    }
    if tau <= sigma_y * sigma_y / 4.0 {
        return Err(Error::domain(format!(
            "tau = {tau} does not exceed sigma_y^2/4 = {}; sigma_k cannot reach zero",
            sigma_y * sigma_y / 4.0
        )));
    }
    if !(sigma_final_target > 0.0) {
        return Err(Error::domain(format!("target must be > 0, got {sigma_final_target}")));
    }
    if sigma_final_target >= sigma_y {
        return Err(Error::domain(format!(
            "target {sigma_final_target} must be below sigma_y = {sigma_y}"
        )));
    }

    let grid: Vec<f64> = (1..=16).map(|i| i as f64 / 17.0).collect();
    let values: Vec<f64> = grid.iter().map(|&b| final_sigma(sigma_y, tau, b, steps)).collect();
    if values.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::domain("final sigma is not monotone in beta on the pre-flight grid"));
    }

    let floor = final_sigma(sigma_y, tau, BETA_MAX, steps);
    if sigma_final_target < floor {
        return Err(Error::InfeasibleTarget(format!(
            "target {sigma_final_target} is below the smallest reachable final sigma {floor} \
             for K = {steps}, tau = {tau}, sigma_y = {sigma_y}"
        )));
    }

    let (mut lo, mut hi) = (0.0, BETA_MAX);
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..BISECTION_MAX {
        mid = 0.5 * (lo + hi);
        let value = final_sigma(sigma_y, tau, mid, steps);
        if (value - sigma_final_target).abs() <= BISECTION_TOL {
            break;
        }
        if value > sigma_final_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}

/// Fixed-point structure of the recursion started at σ_0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub tau: f64,
    pub sigma0: f64,
    pub converges_to_zero: bool,
    /// Positive fixed points in increasing order: `(σ0 ± √(σ0² − 4τ))/2`.
    pub fixed_points: Vec<f64>,
}

impl LemmaReport {
    /// The larger fixed point σ₊, when it exists.
    pub fn upper_fixed_point(&self) -> Option<f64> {
        self.fixed_points.last().copied()
    }
}

/// σ_k → 0 iff τ > σ0²/4; otherwise the roots of `σ² − σ0 σ + τ = 0` are fixed points.
pub fn lemma_report(sigma0: f64, tau: f64) -> LemmaReport {
    let disc = sigma0 * sigma0 - 4.0 * tau;
    let fixed_points = if disc > 0.0 {
        let root = disc.sqrt();
        vec![(sigma0 - root) / 2.0, (sigma0 + root) / 2.0]
    } else if disc == 0.0 {
        vec![sigma0 / 2.0]
    } else {
        Vec::new()
    };
    LemmaReport { tau, sigma0, converges_to_zero: tau > sigma0 * sigma0 / 4.0, fixed_points }
}

/// Runs the recursion `n` steps from σ0 (with σ_y = σ0) and returns the last value.
pub fn iterate_sigma(sigma0: f64, tau: f64, beta: f64, n: usize) -> f64 {
    final_sigma(sigma0, tau, beta, n)
}

/// The decreasing-σ schedule with provable MAP convergence under log-concavity:
/// `σ_k² = τ/(k+1)`, `γ_k = 1/(k+2)`, k = 0..K−1.
#[derive(Debug, Clone, PartialEq)]
pub struct PesmeSchedule {
    pub sigma: Vec<f64>,
    pub gamma: Vec<f64>,
}

pub fn pesme_schedule(tau: f64, steps: usize) -> Result<PesmeSchedule> {
    positive("tau", tau)?;
    if steps == 0 {
        return Err(Error::domain("schedule needs at least one step"));
    }
    let sigma = (0..steps).map(|k| (tau / (k + 1) as f64).sqrt()).collect();
    let gamma = (0..steps).map(|k| 1.0 / (k + 2) as f64).collect();
    Ok(PesmeSchedule { sigma, gamma })
}
