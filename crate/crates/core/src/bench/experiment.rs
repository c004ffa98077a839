//! End-to-end experiment: dataset synthesis, degradation, solving, metrics
//! and report, driven by one JSON config.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::output::{render_svg, summarize, write_csv, GroupSummary, ResultRow};
use super::pnm::write_pnm;
use super::tune::score;
use super::{build_world, synthesize_dataset, worker_pool, Instance, TaskSpec, WorldSpec};
use crate::error::{Error, Result};
use crate::gmm::{GmmPrior, ScoreBias};
use crate::proximap::{Denoiser, DenoiserHandle, ExternalDenoiser};
use crate::solvers::{run_solver, SolverConfig};

/// Which denoiser the solvers call.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DenoiserSpec {
    /// Exact posterior mean of the world prior.
    #[default]
    Exact,
    /// Posterior mean under a variance-inflated prior.
    Biased { delta2: f64 },
    /// A child process speaking the PMDN protocol on stdin/stdout.
    External { program: String, #[serde(default)] args: Vec<String> },
}

impl DenoiserSpec {
    pub fn build(&self, prior: Arc<GmmPrior>) -> Result<DenoiserHandle> {
        Ok(match self {
            DenoiserSpec::Exact => DenoiserHandle::exact(prior),
            DenoiserSpec::Biased { delta2 } => DenoiserHandle::biased(prior, ScoreBias::new(*delta2)?),
            DenoiserSpec::External { program, args } => DenoiserHandle::External(ExternalDenoiser::spawn(program, args)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub world: WorldSpec,
    pub tasks: Vec<TaskSpec>,
    pub solvers: Vec<SolverConfig>,
    pub n_images: usize,
    pub seed: u64,
    pub denoiser: DenoiserSpec,
    /// Write truth, observation and reconstruction images as PNM.
    pub write_images: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            world: WorldSpec::default(),
            tasks: vec![TaskSpec::default()],
            solvers: vec![SolverConfig::default()],
            n_images: 4,
            seed: 0,
            denoiser: DenoiserSpec::Exact,
            write_images: true,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_images == 0 {
            return Err(Error::Config("n_images must be positive".into()));
        }
        if self.tasks.is_empty() || self.solvers.is_empty() {
            return Err(Error::Config("need at least one task and one solver".into()));
        }
        for s in &self.solvers {
            s.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub config_hashes: Vec<String>,
    pub n_runs: usize,
    pub groups: Vec<GroupSummary>,
}

/// Runs the experiment in `cfg` and writes all artifacts under `out`.
///
/// Layout: `prior.json`, `results.csv`, `report.svg`, `summary.json`,
/// `records/<task>/<algorithm>_<mode>_<index>.{json,csv}` and, when enabled,
/// `images/truth_<index>.pnm`, `images/<task>/y_<index>.{pnm,json}` and
/// `images/<task>/<algorithm>_<mode>_<index>.pnm`.
pub fn run_experiment_config(cfg: &ExperimentConfig, out: impl AsRef<Path>) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let out = out.as_ref();
    std::fs::create_dir_all(out)?;
    let prior = Arc::new(build_world(&cfg.world)?);
    std::fs::write(out.join("prior.json"), prior.to_json()?)?;
    let denoiser = cfg.denoiser.build(prior.clone())?;
    let dataset = synthesize_dataset(&prior, cfg.n_images, cfg.seed);

    let images = out.join("images");
    if cfg.write_images {
        std::fs::create_dir_all(&images)?;
        for s in &dataset {
            write_pnm(images.join(format!("truth_{:03}.pnm", s.index)), &s.truth)?;
        }
    }

    let mut instances = Vec::new();
    for spec in &cfg.tasks {
        let task = spec.task.name();
        std::fs::create_dir_all(out.join("records").join(task))?;
        let task_images = images.join(task);
        if cfg.write_images {
            std::fs::create_dir_all(&task_images)?;
        }
        for s in &dataset {
            let inst = Instance::build(s, spec)?;
            if cfg.write_images {
                write_observation(&task_images, &inst)?;
            }
            instances.push(inst);
        }
    }

    let jobs: Vec<(&Instance, &SolverConfig)> =
        instances.iter().flat_map(|inst| cfg.solvers.iter().map(move |s| (inst, s))).collect();
    let rows = worker_pool()?.install(|| {
        jobs.par_iter()
            .map(|(inst, solver)| run_job(inst, solver, &denoiser, out, cfg.write_images))
            .collect::<Result<Vec<ResultRow>>>()
    })?;

    write_csv(out.join("results.csv"), &rows)?;
    std::fs::write(out.join("report.svg"), render_svg(&rows))?;
    let summary = ExperimentSummary {
        config_hashes: cfg.solvers.iter().map(SolverConfig::hash).collect(),
        n_runs: rows.len(),
        groups: summarize(&rows),
    };
    std::fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

/// Loads `config` (JSON) and runs it into `out`.
pub fn run_experiment(config: impl AsRef<Path>, out: impl AsRef<Path>) -> Result<ExperimentSummary> {
    let cfg = ExperimentConfig::load(config)?;
    run_experiment_config(&cfg, out)
}

fn write_observation(dir: &Path, inst: &Instance) -> Result<()> {
    let i = inst.sample.index;
    let y = inst.y();
    if matches!(y.channels(), 1 | 3) {
        write_pnm(dir.join(format!("y_{i:03}.pnm")), y)?;
    }
    std::fs::write(dir.join(format!("y_{i:03}.json")), serde_json::to_string(&inst.sidecar())?)?;
    Ok(())
}

fn record_stem(inst: &Instance, solver: &SolverConfig) -> String {
    let mode = solver.denoise_mode.to_string().replace(':', "-");
    format!("{}_{}_{:03}", solver.algorithm, mode, inst.sample.index)
}

fn run_job(inst: &Instance, solver: &SolverConfig, den: &dyn Denoiser, out: &Path, write_images: bool) -> Result<ResultRow> {
    let task = inst.fidelity.op().kind();
    let cfg = SolverConfig { seed: inst.sample.seed, ..solver.clone() };
    let mut record = run_solver(&inst.fidelity, den, &cfg)?;
    let metrics = score(task, record.output(), inst.truth())?;
    record.metrics = Some(metrics);
    let stem = record_stem(inst, solver);
    let records: PathBuf = out.join("records").join(task.name());
    std::fs::write(records.join(format!("{stem}.json")), serde_json::to_string_pretty(&record)?)?;
    std::fs::write(records.join(format!("{stem}.csv")), record.trace_csv())?;
    if write_images {
        write_pnm(out.join("images").join(task.name()).join(format!("{stem}.pnm")), record.output())?;
    }
    Ok(ResultRow {
        task: task.name().to_string(),
        algorithm: cfg.algorithm.to_string(),
        mode: cfg.denoise_mode.to_string(),
        seed: inst.sample.seed,
        psnr: metrics.psnr,
        ssim: metrics.sharpness,
        nfe: record.nfe,
        wall_ms: record.wall_ms,
    })
}
