//! Plug-and-play outer loops (DPIR, DiffPIR, DAPS, DAPS with ProxiMAP) and
//! the denoiser-driven conditional samplers used as denoising baselines.
//!
//! Every solver takes a [`Denoiser`]; the [`DenoiseMode`] decides whether each
//! outer-loop denoising call is a single MMSE query or a ProxiMAP run.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::degradations::DataFidelity;
use crate::error::{Error, Result};
use crate::grid::{sample_gaussian, Field, Rng};
use crate::metrics::MetricPair;
use crate::proximap::{proximap_denoise, proximap_schedule, CountingDenoiser, Denoiser, ProximapConfig};

/// End of the DPIR noise ladder when the observation is noiseless.
pub const NOISELESS_SIGMA_END: f64 = 1e-3;
/// Lowest level of the conditional samplers' annealing grid.
pub const CONDITIONAL_SIGMA_MIN: f64 = 1e-3;
pub const LANGEVIN_GAMMA_MIN: f64 = 0.01;
pub const DDPM_STEPS: usize = 1000;
pub const DDPM_BETA_START: f64 = 1e-4;
pub const DDPM_BETA_END: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Dpir,
    Diffpir,
    Daps,
    DapsProximap,
    CondDdim,
    CondIndi,
    CondFm,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Dpir => "dpir",
            Algorithm::Diffpir => "diffpir",
            Algorithm::Daps => "daps",
            Algorithm::DapsProximap => "daps_proximap",
            Algorithm::CondDdim => "cond_ddim",
            Algorithm::CondIndi => "cond_indi",
            Algorithm::CondFm => "cond_fm",
        }
    }

    pub fn default_outer_iters(self) -> usize {
        match self {
            Algorithm::Daps | Algorithm::DapsProximap => 200,
            Algorithm::CondDdim | Algorithm::CondIndi | Algorithm::CondFm => 8,
            Algorithm::Dpir | Algorithm::Diffpir => 20,
        }
    }

    pub fn sampler_kind(self) -> Option<SamplerKind> {
        match self {
            Algorithm::CondDdim => Some(SamplerKind::Ddim),
            Algorithm::CondIndi => Some(SamplerKind::Indi),
            Algorithm::CondFm => Some(SamplerKind::Fm),
            _ => None,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "dpir" => Ok(Algorithm::Dpir),
            "diffpir" => Ok(Algorithm::Diffpir),
            "daps" => Ok(Algorithm::Daps),
            "daps_proximap" => Ok(Algorithm::DapsProximap),
            "cond_ddim" | "ddim" => Ok(Algorithm::CondDdim),
            "cond_indi" | "indi" => Ok(Algorithm::CondIndi),
            "cond_fm" | "fm" => Ok(Algorithm::CondFm),
            _ => Err(Error::Config(format!("unknown algorithm {s:?}"))),
        }
    }
}

/// How each outer-loop denoising call is carried out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DenoiseMode {
    Mmse,
    Proximap,
    /// MMSE for the first `n` outer steps, ProxiMAP afterwards.
    Hybrid(usize),
}

impl DenoiseMode {
    pub fn uses_proximap_at(self, k: usize) -> bool {
        match self {
            DenoiseMode::Mmse => false,
            DenoiseMode::Proximap => true,
            DenoiseMode::Hybrid(n) => k >= n,
        }
    }
}

impl fmt::Display for DenoiseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DenoiseMode::Mmse => f.write_str("mmse"),
            DenoiseMode::Proximap => f.write_str("proximap"),
            DenoiseMode::Hybrid(n) => write!(f, "hybrid:{n}"),
        }
    }
}

impl FromStr for DenoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mmse" => Ok(DenoiseMode::Mmse),
            "proximap" => Ok(DenoiseMode::Proximap),
            "hybrid" => Ok(DenoiseMode::Hybrid(19)),
            _ => {
                let n = s
                    .strip_prefix("hybrid:")
                    .and_then(|n| n.parse().ok())
                    .ok_or_else(|| Error::Config(format!("unknown denoise mode {s:?}")))?;
                Ok(DenoiseMode::Hybrid(n))
            }
        }
    }
}

impl TryFrom<String> for DenoiseMode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DenoiseMode> for String {
    fn from(m: DenoiseMode) -> String {
        m.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DpirKnobs {
    pub sigma_max: f64,
    /// Fidelity weight γ; the prox weight at step k is γ(σ_k/σ_y)².
    pub gamma: f64,
}

impl Default for DpirKnobs {
    fn default() -> Self {
        Self { sigma_max: 0.2, gamma: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiffpirKnobs {
    pub lambda: f64,
    pub zeta: f64,
}

impl Default for DiffpirKnobs {
    fn default() -> Self {
        Self { lambda: 7.0, zeta: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DapsKnobs {
    /// γ_init of the annealed Langevin step.
    pub langevin_lr: f64,
    pub langevin_steps: usize,
    /// PF-ODE Euler steps (baseline) or ProxiMAP steps per outer iteration.
    pub inner_steps: usize,
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub rho: f64,
    /// σ_K of the ProxiMAP-shaped outer grid.
    pub outer_sigma_final: f64,
}

impl Default for DapsKnobs {
    fn default() -> Self {
        Self {
            langevin_lr: 1e-5,
            langevin_steps: 50,
            inner_steps: 6,
            sigma_max: 10.0,
            sigma_min: 0.01,
            rho: 7.0,
            outer_sigma_final: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    /// Outer iterations K; the algorithm's default when absent.
    pub outer_iters: Option<usize>,
    pub denoise_mode: DenoiseMode,
    pub dpir: DpirKnobs,
    pub diffpir: DiffpirKnobs,
    pub daps: DapsKnobs,
    pub proximap: ProximapConfig,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Dpir,
            outer_iters: None,
            denoise_mode: DenoiseMode::Mmse,
            dpir: DpirKnobs::default(),
            diffpir: DiffpirKnobs::default(),
            daps: DapsKnobs::default(),
            proximap: ProximapConfig::default(),
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn new(algorithm: Algorithm, denoise_mode: DenoiseMode) -> Self {
        Self { algorithm, denoise_mode, ..Self::default() }
    }

    pub fn outer(&self) -> usize {
        self.outer_iters.unwrap_or_else(|| self.algorithm.default_outer_iters())
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.outer();
        if k == 0 {
            return Err(Error::Config("outer_iters must be positive".into()));
        }
        if let DenoiseMode::Hybrid(n) = self.denoise_mode {
            if n > k {
                return Err(Error::Config(format!("hybrid switch step {n} exceeds outer iterations {k}")));
            }
        }
        if self.denoise_mode != DenoiseMode::Mmse {
            self.proximap.validate()?;
        }
        match self.algorithm {
            Algorithm::Dpir => {
                if !(self.dpir.sigma_max > 0.0 && self.dpir.gamma > 0.0) {
                    return Err(Error::Config("dpir sigma_max and gamma must be positive".into()));
                }
            }
            Algorithm::Diffpir => {
                if !(0.0..=1.0).contains(&self.diffpir.zeta) {
                    return Err(Error::domain(format!("zeta must lie in [0,1], got {}", self.diffpir.zeta)));
                }
                if !(self.diffpir.lambda > 0.0) {
                    return Err(Error::Config("diffpir lambda must be positive".into()));
                }
            }
            Algorithm::Daps | Algorithm::DapsProximap => {
                let d = &self.daps;
                if d.inner_steps == 0 {
                    return Err(Error::Config("daps inner_steps must be positive".into()));
                }
                if !(d.langevin_lr >= 0.0 && d.sigma_max > d.sigma_min && d.sigma_min > 0.0 && d.rho > 0.0) {
                    return Err(Error::Config("invalid daps schedule or step size".into()));
                }
                if self.algorithm == Algorithm::DapsProximap {
                    self.proximap.validate()?;
                }
            }
            Algorithm::CondDdim | Algorithm::CondIndi | Algorithm::CondFm => {}
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// Denoiser evaluations a run with `cfg` performs.
pub fn expected_nfe(cfg: &SolverConfig) -> usize {
    let k = cfg.outer();
    let ki = cfg.proximap.steps;
    match cfg.algorithm {
        Algorithm::Dpir | Algorithm::Diffpir => match cfg.denoise_mode {
            DenoiseMode::Mmse => k,
            DenoiseMode::Proximap => k * ki,
            DenoiseMode::Hybrid(n) => n + (k - n) * ki,
        },
        Algorithm::Daps | Algorithm::DapsProximap => k * cfg.daps.inner_steps,
        Algorithm::CondDdim | Algorithm::CondIndi | Algorithm::CondFm => k,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub sigma: f64,
    pub fidelity: f64,
    pub nfe: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub algorithm: Algorithm,
    pub mode: DenoiseMode,
    pub seed: u64,
    pub sigma_targets: Vec<f64>,
    pub nfe: usize,
    #[serde(skip)]
    pub output: Option<Field>,
    pub metrics: Option<MetricPair>,
    pub wall_ms: f64,
    pub trace: Vec<TraceRow>,
}

impl RunRecord {
    pub fn output(&self) -> &Field {
        self.output.as_ref().expect("run record holds its reconstruction")
    }

    pub fn trace_csv(&self) -> String {
        let mut s = String::from("k,sigma_k,fidelity,nfe\n");
        for row in &self.trace {
            s.push_str(&format!("{},{},{},{}\n", row.k, row.sigma, row.fidelity, row.nfe));
        }
        s
    }
}

/// `n` log-spaced values from `start` to `end`, both included.
pub fn logspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![start],
        _ => {
            let (a, b) = (start.ln(), end.ln());
            (0..n)
                .map(|i| {
                    if i == 0 {
                        start
                    } else if i == n - 1 {
                        end
                    } else {
                        (a + (b - a) * i as f64 / (n - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

/// `ᾱ_t` of the linear DDPM variance schedule, `t = 0..T−1`.
pub fn ddpm_alpha_bar() -> Vec<f64> {
    let mut acc = 1.0;
    (0..DDPM_STEPS)
        .map(|t| {
            let beta = DDPM_BETA_START + (DDPM_BETA_END - DDPM_BETA_START) * t as f64 / (DDPM_STEPS - 1) as f64;
            acc *= 1.0 - beta;
            acc
        })
        .collect()
}

/// DDPM timesteps used by DiffPIR, from the noisiest down to `t = 0`.
pub fn diffpir_timesteps(k: usize) -> Vec<usize> {
    if k == 1 {
        return vec![0];
    }
    (0..k)
        .map(|i| (((DDPM_STEPS - 1) * (k - 1 - i)) as f64 / (k - 1) as f64).round() as usize)
        .collect()
}

pub fn diffpir_alpha_bars(k: usize) -> Vec<f64> {
    let table = ddpm_alpha_bar();
    diffpir_timesteps(k).into_iter().map(|t| table[t]).collect()
}

/// EDM grid `σ_i = (σ_max^{1/ρ} + i/(n−1)(σ_min^{1/ρ} − σ_max^{1/ρ}))^ρ`.
pub fn edm_sigmas(n: usize, sigma_max: f64, sigma_min: f64, rho: f64) -> Vec<f64> {
    if n == 1 {
        return vec![sigma_max];
    }
    let (a, b) = (sigma_max.powf(1.0 / rho), sigma_min.powf(1.0 / rho));
    (0..n).map(|i| (a + i as f64 / (n - 1) as f64 * (b - a)).powf(rho)).collect()
}

/// Annealed Langevin step `γ_k = γ_init(1 + (k/K)(γ_min − 1))`.
pub fn langevin_step(gamma_init: f64, k: usize, outer: usize) -> f64 {
    gamma_init * (1.0 + (k as f64 / outer as f64) * (LANGEVIN_GAMMA_MIN - 1.0))
}

fn ensure_finite(x: &Field, iteration: usize, context: &str) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence { iteration, context: context.into() })
    }
}

fn fidelity_value(fid: &DataFidelity, x: &Field) -> Result<f64> {
    if fid.sigma_y() > 0.0 {
        fid.value(x)
    } else {
        Ok(0.5 * fid.apply(x)?.sub(fid.y()).norm_sq())
    }
}

/// One outer-loop denoising call at level `sigma`.
///
/// ProxiMAP calls treat `sigma` as their measurement level and scale
/// `sigma_final` by `sigma / sigma_ref`, keeping the inner schedule feasible.
fn denoise_step(
    cfg: &SolverConfig,
    k: usize,
    x: &Field,
    sigma: f64,
    sigma_ref: f64,
    denoiser: &dyn Denoiser,
) -> Result<Field> {
    if cfg.denoise_mode.uses_proximap_at(k) {
        let inner = ProximapConfig { sigma_final: cfg.proximap.sigma_final * sigma / sigma_ref, ..cfg.proximap.clone() };
        proximap_denoise(x, sigma, denoiser, &inner)
    } else {
        denoiser.denoise(x, sigma)
    }
}

struct Recorder<'a> {
    counter: CountingDenoiser<'a>,
    started: Instant,
    trace: Vec<TraceRow>,
}

impl<'a> Recorder<'a> {
    fn new(denoiser: &'a dyn Denoiser) -> Self {
        Self { counter: CountingDenoiser::new(denoiser), started: Instant::now(), trace: Vec::new() }
    }

    fn row(&mut self, k: usize, sigma: f64, fidelity: f64) {
        self.trace.push(TraceRow { k, sigma, fidelity, nfe: self.counter.calls() });
    }

    fn finish(self, cfg: &SolverConfig, sigma_targets: Vec<f64>, output: Field) -> RunRecord {
        RunRecord {
            config_hash: cfg.hash(),
            algorithm: cfg.algorithm,
            mode: cfg.denoise_mode,
            seed: cfg.seed,
            sigma_targets,
            nfe: self.counter.calls(),
            output: Some(output),
            metrics: None,
            wall_ms: self.started.elapsed().as_secs_f64() * 1e3,
            trace: self.trace,
        }
    }
}

fn require_linear(fid: &DataFidelity, name: &str) -> Result<()> {
    if fid.op().is_linear() {
        Ok(())
    } else {
        Err(Error::Unsupported(format!("{name} needs a closed-form prox; {} is nonlinear", fid.op().kind())))
    }
}

/// Half-quadratic splitting with a log-spaced noise ladder.
pub fn run_dpir(fid: &DataFidelity, denoiser: &dyn Denoiser, cfg: &SolverConfig) -> Result<RunRecord> {
    cfg.validate()?;
    require_linear(fid, "dpir")?;
    let k_total = cfg.outer();
    let sigma_y = fid.sigma_y();
    let sigma_end = if sigma_y > 0.0 { sigma_y } else { NOISELESS_SIGMA_END };
    let sigmas = logspace(cfg.dpir.sigma_max, sigma_end, k_total);
    let mut rec = Recorder::new(denoiser);
    let mut x = fid.adjoint_y()?;
    for (k, &sigma) in sigmas.iter().enumerate() {
        // prox of γ_k·½‖Ax − y‖² with γ_k = γ(σ_k/σ_y)², i.e. weight γσ_k² on f
        let z = fid.prox(&x, cfg.dpir.gamma * sigma * sigma)?;
        ensure_finite(&z, k, "dpir prox")?;
        x = denoise_step(cfg, k, &z, sigma, sigma_end, &rec.counter)?;
        ensure_finite(&x, k, "dpir denoise")?;
        let fv = fidelity_value(fid, &x)?;
        rec.row(k, sigma, fv);
    }
    Ok(rec.finish(cfg, sigmas, x))
}

/// Diffusion-guided splitting on a subsampled DDPM schedule with noise
/// re-injection. Returns the last denoiser estimate.
pub fn run_diffpir(fid: &DataFidelity, denoiser: &dyn Denoiser, cfg: &SolverConfig) -> Result<RunRecord> {
    cfg.validate()?;
    require_linear(fid, "diffpir")?;
    let k_total = cfg.outer();
    let alpha_bars = diffpir_alpha_bars(k_total);
    let levels: Vec<f64> = alpha_bars.iter().map(|a| ((1.0 - a) / a).sqrt()).collect();
    let sigma_ref = *levels.last().expect("K >= 1");
    let (lambda, zeta) = (cfg.diffpir.lambda, cfg.diffpir.zeta);
    let mut rng = Rng::new(cfg.seed);
    let mut rec = Recorder::new(denoiser);
    let shape = fid.x_shape();

    let a0 = alpha_bars[0];
    let mut x = fid.adjoint_y()?.scaled(a0.sqrt());
    x.axpy((1.0 - a0).sqrt(), &sample_gaussian(&mut rng, shape, 1.0)?);

    let mut estimate = x.clone();
    for k in 0..k_total {
        let ab = alpha_bars[k];
        let (sa, sn) = (ab.sqrt(), (1.0 - ab).sqrt());
        estimate = denoise_step(cfg, k, &x.scaled(1.0 / sa), levels[k], sigma_ref, &rec.counter)?;
        ensure_finite(&estimate, k, "diffpir denoise")?;
        // prox of (1/ρ_k)·½‖Ax − y‖², ρ_k = λσ_y² ᾱ/(1−ᾱ)
        let x_hat = fid.prox(&estimate, (1.0 - ab) / (lambda * ab))?;
        let eps_hat = Field::linear_combination(&[(1.0 / sn, &x), (-sa / sn, &estimate)]);
        let next_ab = alpha_bars.get(k + 1).copied().unwrap_or(1.0);
        let (nsa, nsn) = (next_ab.sqrt(), (1.0 - next_ab).sqrt());
        let eps = if zeta > 0.0 { sample_gaussian(&mut rng, shape, 1.0)? } else { Field::zeros(shape) };
        x = Field::linear_combination(&[
            (nsa, &x_hat),
            (nsn * (1.0 - zeta).sqrt(), &eps_hat),
            (nsn * zeta.sqrt(), &eps),
        ]);
        ensure_finite(&x, k, "diffpir iterate")?;
        let fv = fidelity_value(fid, &x_hat)?;
        rec.row(k, levels[k], fv);
    }
    Ok(rec.finish(cfg, levels, estimate))
}

/// Probability-flow Euler sample from level `sigma` down to 0 over an EDM
/// grid of `steps` levels ending at `min(sigma_min, sigma)`.
pub fn pf_ode_sample(x: &Field, sigma: f64, denoiser: &dyn Denoiser, steps: usize, sigma_min: f64, rho: f64) -> Result<Field> {
    let grid = edm_sigmas(steps, sigma, sigma_min.min(sigma), rho);
    let mut x = x.clone();
    for (i, &s) in grid.iter().enumerate() {
        let d = denoiser.denoise(&x, s)?;
        let next = grid.get(i + 1).copied().unwrap_or(0.0);
        if next == 0.0 {
            return Ok(d);
        }
        let slope = Field::linear_combination(&[(1.0 / s, &x), (-1.0 / s, &d)]);
        x.axpy(next - s, &slope);
    }
    Ok(x)
}

fn langevin(fid: &DataFidelity, z0: &Field, sigma: f64, gamma: f64, steps: usize, rng: &mut Rng) -> Result<Field> {
    let mut z = z0.clone();
    let noise_scale = (2.0 * gamma).sqrt();
    for _ in 0..steps {
        let g = fid.grad(&z)?;
        let prior = Field::linear_combination(&[(1.0 / (sigma * sigma), &z), (-1.0 / (sigma * sigma), z0)]);
        let eps = sample_gaussian(rng, z.shape(), 1.0)?;
        z = Field::linear_combination(&[(1.0, &z), (-gamma, &g), (-gamma, &prior), (noise_scale, &eps)]);
    }
    Ok(z)
}

fn daps_loop(
    fid: &DataFidelity,
    denoiser: &dyn Denoiser,
    cfg: &SolverConfig,
    sigmas: Vec<f64>,
    inner: impl Fn(&Field, f64, &dyn Denoiser) -> Result<Field>,
) -> Result<RunRecord> {
    let k_total = cfg.outer();
    let d = &cfg.daps;
    let mut rng = Rng::new(cfg.seed);
    let mut rec = Recorder::new(denoiser);
    let shape = fid.x_shape();
    let mut x = Field::filled(shape, 0.5);
    x.axpy(1.0, &sample_gaussian(&mut rng, shape, sigmas[0])?);
    let mut z = x.clone();
    for k in 0..k_total {
        let sigma = sigmas[k];
        let z0 = inner(&x, sigma, &rec.counter)?;
        ensure_finite(&z0, k, "daps inner estimate")?;
        let gamma = langevin_step(d.langevin_lr, k, k_total);
        z = langevin(fid, &z0, sigma, gamma, d.langevin_steps, &mut rng)?;
        ensure_finite(&z, k, "daps Langevin")?;
        let next = sigmas.get(k + 1).copied().unwrap_or(0.0);
        x = z.add(&sample_gaussian(&mut rng, shape, next)?);
        let fv = fidelity_value(fid, &z)?;
        rec.row(k, sigma, fv);
    }
    Ok(rec.finish(cfg, sigmas, z))
}

/// Decoupled annealing: PF-ODE estimate, Langevin data step, re-noise.
pub fn run_daps(fid: &DataFidelity, denoiser: &dyn Denoiser, cfg: &SolverConfig) -> Result<RunRecord> {
    cfg.validate()?;
    if fid.sigma_y() == 0.0 {
        return Err(Error::domain("daps needs sigma_y > 0"));
    }
    let d = cfg.daps.clone();
    let sigmas = edm_sigmas(cfg.outer(), d.sigma_max, d.sigma_min, d.rho);
    daps_loop(fid, denoiser, cfg, sigmas, |x, s, den| pf_ode_sample(x, s, den, d.inner_steps, d.sigma_min, d.rho))
}

/// DAPS with ProxiMAP as the inner estimator and the ProxiMAP recursion as the
/// outer noise grid (from `sigma_max` down to `outer_sigma_final`).
pub fn run_daps_proximap(fid: &DataFidelity, denoiser: &dyn Denoiser, cfg: &SolverConfig) -> Result<RunRecord> {
    cfg.validate()?;
    if fid.sigma_y() == 0.0 {
        return Err(Error::domain("daps needs sigma_y > 0"));
    }
    let d = cfg.daps.clone();
    let outer_cfg = ProximapConfig {
        steps: cfg.outer(),
        sigma_final: d.outer_sigma_final,
        tau_mul: cfg.proximap.tau_mul,
        return_last_mmse: true,
    };
    let schedule = proximap_schedule(d.sigma_max, &outer_cfg)?;
    let sigmas = schedule.sigma().to_vec();
    let sigma_ref = fid.sigma_y();
    let base = cfg.proximap.clone();
    daps_loop(fid, denoiser, cfg, sigmas, move |x, s, den| {
        let inner = ProximapConfig { steps: d.inner_steps, sigma_final: base.sigma_final * s / sigma_ref, ..base.clone() };
        proximap_denoise(x, s, den, &inner)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Ddim,
    Indi,
    Fm,
}

/// Annealed sampling from `y` at level `sigma_y` down to 1e-3 on a log grid of
/// `steps` levels, one denoiser call per level; returns the last estimate.
pub fn conditional_sampler(y: &Field, sigma_y: f64, denoiser: &dyn Denoiser, kind: SamplerKind, steps: usize) -> Result<Field> {
    if steps == 0 {
        return Err(Error::domain("conditional sampler needs at least one step"));
    }
    if !(sigma_y > 0.0) {
        return Err(Error::domain(format!("sigma_y must be > 0, got {sigma_y}")));
    }
    let grid = logspace(sigma_y, CONDITIONAL_SIGMA_MIN.min(sigma_y), steps);
    let mut x = y.clone();
    for k in 0..steps {
        let s = grid[k];
        let estimate = denoiser.denoise(&x, s)?;
        let Some(&next) = grid.get(k + 1) else {
            return Ok(estimate);
        };
        let ratio = next / s;
        x = match kind {
            SamplerKind::Ddim => {
                let mut v = estimate.clone();
                v.axpy(ratio, &x.sub(&estimate));
                v
            }
            SamplerKind::Indi => Field::linear_combination(&[(ratio, &x), (1.0 - ratio, &estimate)]),
            SamplerKind::Fm => {
                let (t, t_next) = (s / (s + 1.0), next / (next + 1.0));
                let xf = x.scaled(1.0 / (1.0 + s));
                let velocity = Field::linear_combination(&[(1.0 / t, &xf), (-1.0 / t, &estimate)]);
                let mut stepped = xf;
                stepped.axpy(t_next - t, &velocity);
                stepped.scaled(1.0 + next)
            }
        };
        ensure_finite(&x, k, "conditional sampler")?;
    }
    unreachable!("loop returns at the last level")
}

/// Dispatches on `cfg.algorithm`. Conditional samplers are denoisers rather
/// than inverse-problem solvers and are not accepted here.
pub fn run_solver(fid: &DataFidelity, denoiser: &dyn Denoiser, cfg: &SolverConfig) -> Result<RunRecord> {
    match cfg.algorithm {
        Algorithm::Dpir => run_dpir(fid, denoiser, cfg),
        Algorithm::Diffpir => run_diffpir(fid, denoiser, cfg),
        Algorithm::Daps => run_daps(fid, denoiser, cfg),
        Algorithm::DapsProximap => run_daps_proximap(fid, denoiser, cfg),
        Algorithm::CondDdim | Algorithm::CondIndi | Algorithm::CondFm => Err(Error::Unsupported(format!(
            "{} is a denoising sampler; use the denoising bench",
            cfg.algorithm
        ))),
    }
}
