//! Standalone denoising bench (ProxiMAP against MMSE, annealed samplers and
//! the naive MAP iteration) and the learned-score-bias diagnosis.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_world, mix_seed, worker_pool, WorldSpec};
use crate::error::{Error, Result};
use crate::gmm::{GmmPrior, ScoreBias};
use crate::grid::{Field, Rng, Shape};
use crate::metrics::{float_or_inf, psnr};
use crate::proximap::{
    naive_map_iterate, proximap_denoise, CountingDenoiser, Denoiser, DenoiserHandle, ProximapConfig,
    NAIVE_DEFAULT_STEPS,
};
use crate::schedule::tau_from_multiplier;
use crate::solvers::{conditional_sampler, SamplerKind};

/// Prior the bench draws clean images from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BenchPrior {
    World(WorldSpec),
    /// Two equal-weight modes `0.5 ± (gap/2)·u` with `u` a unit-norm checker,
    /// `gap = gap_sds · s` in Euclidean norm.
    TwoMode { height: usize, width: usize, s: f64, gap_sds: f64 },
}

impl BenchPrior {
    pub fn build(&self) -> Result<GmmPrior> {
        match self {
            BenchPrior::World(spec) => build_world(spec),
            BenchPrior::TwoMode { height, width, s, gap_sds } => two_mode_prior(*height, *width, *s, *gap_sds),
        }
    }
}

pub fn two_mode_prior(height: usize, width: usize, s: f64, gap_sds: f64) -> Result<GmmPrior> {
    if !(s > 0.0) || !(gap_sds > 0.0) {
        return Err(Error::Config(format!("two-mode prior needs s > 0 and gap > 0, got s = {s}, gap = {gap_sds}")));
    }
    let shape = Shape::new(height, width, 1)?;
    let half = 0.5 * gap_sds * s / (shape.len() as f64).sqrt();
    let checker = |r: usize, c: usize| if (r + c) % 2 == 0 { 1.0 } else { -1.0 };
    let plus = Field::from_fn(shape, |r, c, _| 0.5 + half * checker(r, c));
    let minus = Field::from_fn(shape, |r, c, _| 0.5 - half * checker(r, c));
    GmmPrior::uniform(vec![plus, minus], s * s)
}

/// Smallest Euclidean distance between two component means.
pub fn min_mode_gap(prior: &GmmPrior) -> f64 {
    let m = prior.means();
    let mut gap = f64::INFINITY;
    for i in 0..m.len() {
        for j in i + 1..m.len() {
            gap = gap.min(m[i].dist_sq(&m[j]).sqrt());
        }
    }
    gap
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum DenoiseMethod {
    Mmse,
    Proximap { steps: usize, sigma_final: f64 },
    Sampler { kind: SamplerKind, steps: usize },
    Naive { steps: usize },
}

impl DenoiseMethod {
    pub fn label(&self) -> String {
        match self {
            DenoiseMethod::Mmse => "mmse".into(),
            DenoiseMethod::Proximap { steps, sigma_final } => format!("proximap:k={steps}:sf={sigma_final}"),
            DenoiseMethod::Sampler { kind, steps } => {
                let name = match kind {
                    SamplerKind::Ddim => "ddim",
                    SamplerKind::Indi => "indi",
                    SamplerKind::Fm => "fm",
                };
                format!("{name}:k={steps}")
            }
            DenoiseMethod::Naive { steps } => format!("naive:k={steps}"),
        }
    }

    fn run(&self, y: &Field, sigma_y: f64, tau_mul: f64, den: &dyn Denoiser) -> Result<Field> {
        match *self {
            DenoiseMethod::Mmse => den.denoise(y, sigma_y),
            DenoiseMethod::Proximap { steps, sigma_final } => {
                let cfg = ProximapConfig { tau_mul, ..ProximapConfig::with_steps(steps, sigma_final) };
                proximap_denoise(y, sigma_y, den, &cfg)
            }
            DenoiseMethod::Sampler { kind, steps } => conditional_sampler(y, sigma_y, den, kind, steps),
            DenoiseMethod::Naive { steps } => {
                let tau = tau_from_multiplier(tau_mul, sigma_y)?;
                let mut trace = naive_map_iterate(y, sigma_y, tau, steps, den)?;
                Ok(trace.pop().expect("trace holds y"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DenoiseBenchConfig {
    pub prior: BenchPrior,
    /// Per-pixel noise std; `None` means half the smallest mode gap.
    pub sigma_y: Option<f64>,
    pub n_seeds: usize,
    pub seed: u64,
    /// Score bias of the denoiser; 0 is exact.
    pub delta2: f64,
    pub tau_mul: f64,
    pub methods: Vec<DenoiseMethod>,
}

impl Default for DenoiseBenchConfig {
    fn default() -> Self {
        Self {
            prior: BenchPrior::TwoMode { height: 8, width: 8, s: 1e-3, gap_sds: 6.0 },
            sigma_y: None,
            n_seeds: 200,
            seed: 0,
            delta2: 0.0,
            tau_mul: 10.0,
            methods: vec![
                DenoiseMethod::Mmse,
                DenoiseMethod::Proximap { steps: 8, sigma_final: 3e-4 },
                DenoiseMethod::Sampler { kind: SamplerKind::Ddim, steps: 8 },
                DenoiseMethod::Sampler { kind: SamplerKind::Indi, steps: 8 },
                DenoiseMethod::Sampler { kind: SamplerKind::Fm, steps: 8 },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseRow {
    pub method: String,
    pub seed: u64,
    #[serde(with = "float_or_inf")]
    pub psnr: f64,
    pub mode_distance: f64,
    pub cond_log_density: f64,
    pub nfe: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub mean_psnr: f64,
    pub median_mode_distance: f64,
    pub mean_mode_distance: f64,
    pub mean_cond_log_density: f64,
    pub nfe: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseReport {
    pub sigma_y: f64,
    pub rows: Vec<DenoiseRow>,
    pub summary: Vec<MethodSummary>,
}

impl DenoiseReport {
    /// Rows of one method in seed order.
    pub fn method_rows(&self, label: &str) -> Vec<&DenoiseRow> {
        self.rows.iter().filter(|r| r.method == label).collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["method", "seed", "psnr", "mode_distance", "cond_log_density", "nfe"])?;
        for r in &self.rows {
            w.write_record([
                r.method.clone(),
                r.seed.to_string(),
                crate::metrics::format_metric(r.psnr),
                format!("{:e}", r.mode_distance),
                format!("{:e}", r.cond_log_density),
                r.nfe.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Clean image and its noisy observation for trial `index`.
pub fn noisy_trial(prior: &GmmPrior, sigma_y: f64, seed: u64, index: usize) -> (u64, Field, Field) {
    let trial_seed = mix_seed(seed, index as u64);
    let (_, truth) = prior.sample(&mut Rng::derive(trial_seed, 1));
    let mut rng = Rng::derive(trial_seed, 2);
    let mut y = truth.clone();
    for v in y.data_mut() {
        *v += sigma_y * rng.normal();
    }
    (trial_seed, truth, y)
}

pub fn run_denoise_bench(cfg: &DenoiseBenchConfig) -> Result<DenoiseReport> {
    if cfg.methods.is_empty() || cfg.n_seeds == 0 {
        return Err(Error::Config("denoising bench needs at least one method and one seed".into()));
    }
    let prior = Arc::new(cfg.prior.build()?);
    let sigma_y = match cfg.sigma_y {
        Some(s) => s,
        None => {
            let gap = min_mode_gap(&prior);
            if !gap.is_finite() {
                return Err(Error::Config("sigma_y must be given for a single-mode prior".into()));
            }
            0.5 * gap
        }
    };
    if !(sigma_y > 0.0) {
        return Err(Error::Config(format!("sigma_y must be > 0, got {sigma_y}")));
    }
    let den = DenoiserHandle::biased(prior.clone(), ScoreBias::new(cfg.delta2)?);
    let per_seed: Vec<Vec<DenoiseRow>> = worker_pool()?.install(|| {
        (0..cfg.n_seeds)
            .into_par_iter()
            .map(|i| {
                let (seed, truth, y) = noisy_trial(&prior, sigma_y, cfg.seed, i);
                cfg.methods
                    .iter()
                    .map(|m| {
                        let counter = CountingDenoiser::new(&den);
                        let x = m.run(&y, sigma_y, cfg.tau_mul, &counter)?;
                        Ok(DenoiseRow {
                            method: m.label(),
                            seed,
                            psnr: psnr(&x, &truth)?,
                            mode_distance: prior.nearest_mode_distance(&x)?,
                            cond_log_density: prior.conditional_log_density(&x, &y, sigma_y)?,
                            nfe: counter.calls(),
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let rows: Vec<DenoiseRow> = per_seed.into_iter().flatten().collect();
    let summary = cfg
        .methods
        .iter()
        .map(|m| {
            let label = m.label();
            let mine: Vec<&DenoiseRow> = rows.iter().filter(|r| r.method == label).collect();
            let n = mine.len() as f64;
            let dist: Vec<f64> = mine.iter().map(|r| r.mode_distance).collect();
            MethodSummary {
                method: label,
                mean_psnr: mine.iter().map(|r| r.psnr).sum::<f64>() / n,
                median_mode_distance: median(&dist),
                mean_mode_distance: dist.iter().sum::<f64>() / n,
                mean_cond_log_density: mine.iter().map(|r| r.cond_log_density).sum::<f64>() / n,
                nfe: mine.first().map_or(0, |r| r.nfe),
            }
        })
        .collect();
    Ok(DenoiseReport { sigma_y, rows, summary })
}

/// Naive MAP iteration with exact and biased scores against ProxiMAP with the
/// biased denoiser, on a tight many-mode world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnoseConfig {
    pub world: WorldSpec,
    pub sigma_y: f64,
    /// Score bias; `None` means 25·s².
    pub delta2: Option<f64>,
    pub seeds: usize,
    pub seed: u64,
    pub naive_steps: usize,
    pub proximap: ProximapConfig,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        Self {
            world: WorldSpec { height: 8, width: 8, modes: 16, s: 1e-3, ..WorldSpec::default() },
            sigma_y: 0.1,
            delta2: None,
            seeds: 200,
            seed: 0,
            naive_steps: NAIVE_DEFAULT_STEPS,
            proximap: ProximapConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseRow {
    pub seed: u64,
    pub naive_exact: f64,
    pub naive_biased: f64,
    pub proximap_biased: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseReport {
    pub s: f64,
    pub delta2: f64,
    pub rows: Vec<DiagnoseRow>,
    /// Share of seeds where the exact-score naive iterate ends within 5s of a mode.
    pub exact_within_5s: f64,
    /// Share of seeds where the biased naive iterate is farther from a mode than ProxiMAP.
    pub naive_farther_than_proximap: f64,
    pub median_naive_exact: f64,
    pub median_naive_biased: f64,
    pub median_proximap_biased: f64,
}

pub fn run_diagnose(cfg: &DiagnoseConfig) -> Result<DiagnoseReport> {
    if cfg.seeds == 0 {
        return Err(Error::Config("diagnosis needs at least one seed".into()));
    }
    let prior = Arc::new(build_world(&cfg.world)?);
    let s = cfg.world.s;
    let delta2 = cfg.delta2.unwrap_or(25.0 * s * s);
    let exact = DenoiserHandle::exact(prior.clone());
    let biased = DenoiserHandle::biased(prior.clone(), ScoreBias::new(delta2)?);
    let tau = tau_from_multiplier(cfg.proximap.tau_mul, cfg.sigma_y)?;
    let rows: Vec<DiagnoseRow> = worker_pool()?.install(|| {
        (0..cfg.seeds)
            .into_par_iter()
            .map(|i| {
                let (seed, _, y) = noisy_trial(&prior, cfg.sigma_y, cfg.seed, i);
                let last = |den: &dyn Denoiser| -> Result<Field> {
                    Ok(naive_map_iterate(&y, cfg.sigma_y, tau, cfg.naive_steps, den)?.pop().expect("trace holds y"))
                };
                Ok(DiagnoseRow {
                    seed,
                    naive_exact: prior.nearest_mode_distance(&last(&exact)?)?,
                    naive_biased: prior.nearest_mode_distance(&last(&biased)?)?,
                    proximap_biased: prior
                        .nearest_mode_distance(&proximap_denoise(&y, cfg.sigma_y, &biased, &cfg.proximap)?)?,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let n = rows.len() as f64;
    let share = |f: &dyn Fn(&DiagnoseRow) -> bool| rows.iter().filter(|r| f(r)).count() as f64 / n;
    let col = |f: fn(&DiagnoseRow) -> f64| median(&rows.iter().map(f).collect::<Vec<_>>());
    Ok(DiagnoseReport {
        s,
        delta2,
        exact_within_5s: share(&|r| r.naive_exact <= 5.0 * s),
        naive_farther_than_proximap: share(&|r| r.naive_biased > r.proximap_biased),
        median_naive_exact: col(|r| r.naive_exact),
        median_naive_biased: col(|r| r.naive_biased),
        median_proximap_biased: col(|r| r.proximap_biased),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_mode_gap_is_exact() {
        let p = two_mode_prior(4, 4, 1e-3, 6.0).unwrap();
        assert!((min_mode_gap(&p) - 6e-3).abs() < 1e-15);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn bench_counts_nfe_and_is_deterministic() {
        let cfg = DenoiseBenchConfig {
            n_seeds: 6,
            methods: vec![
                DenoiseMethod::Mmse,
                DenoiseMethod::Proximap { steps: 4, sigma_final: 1e-4 },
                DenoiseMethod::Sampler { kind: SamplerKind::Fm, steps: 3 },
                DenoiseMethod::Naive { steps: 5 },
            ],
            ..DenoiseBenchConfig::default()
        };
        let a = run_denoise_bench(&cfg).unwrap();
        let b = run_denoise_bench(&cfg).unwrap();
        assert_eq!(a, b);
        assert!((a.sigma_y - 3e-3).abs() < 1e-15);
        let nfe: Vec<usize> = a.summary.iter().map(|s| s.nfe).collect();
        assert_eq!(nfe, vec![1, 4, 3, 5]);
        assert_eq!(a.rows.len(), 24);
        assert!(a.to_csv().unwrap().starts_with("method,seed,psnr,mode_distance,cond_log_density,nfe\n"));
    }

    #[test]
    fn single_step_samplers_and_proximap_equal_mmse() {
        let cfg = DenoiseBenchConfig {
            n_seeds: 3,
            methods: vec![
                DenoiseMethod::Mmse,
                DenoiseMethod::Proximap { steps: 1, sigma_final: 1e-4 },
                DenoiseMethod::Sampler { kind: SamplerKind::Ddim, steps: 1 },
            ],
            ..DenoiseBenchConfig::default()
        };
        let r = run_denoise_bench(&cfg).unwrap();
        let d: Vec<f64> = r.summary.iter().map(|s| s.mean_mode_distance).collect();
        assert_eq!(d[0], d[1]);
        assert_eq!(d[0], d[2]);
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = DenoiseBenchConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"kind\":\"two_mode\""));
        assert_eq!(serde_json::from_str::<DenoiseBenchConfig>(&text).unwrap(), cfg);
        let partial: DenoiseBenchConfig = serde_json::from_str(r#"{"n_seeds": 3}"#).unwrap();
        assert_eq!(partial.n_seeds, 3);
    }

    #[test]
    fn diagnose_small_run() {
        let cfg = DiagnoseConfig { seeds: 4, naive_steps: 50, ..DiagnoseConfig::default() };
        let r = run_diagnose(&cfg).unwrap();
        assert_eq!(r.rows.len(), 4);
        assert!((r.delta2 - 25e-6).abs() < 1e-18);
        assert!(r.rows.iter().all(|row| row.naive_exact.is_finite() && row.proximap_biased.is_finite()));
    }
}
