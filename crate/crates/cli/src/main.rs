//! Command-line front end for the ProxiMAP desk-scale experiments.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use proximap::bench::denoise::{run_denoise_bench, run_diagnose, DenoiseBenchConfig, DiagnoseConfig};
use proximap::bench::experiment::{run_experiment_config, ExperimentConfig};
use proximap::bench::output::report;
use proximap::bench::tune::{default_ranges, evaluate_config, pareto_select_min_proxy, random_search_tune, TuneBudget};
use proximap::bench::{build_world, synthesize_dataset, worker_pool, Instance, TaskSpec};
use proximap::degradations::TaskKind;
use proximap::error::{Error, Result};
use proximap::gmm::{GmmPrior, ScoreBias};
use proximap::proximap::external::serve;
use proximap::proximap::{proximap_schedule, DenoiserHandle, ProximapConfig};
use proximap::solvers::{Algorithm, DenoiseMode, SolverConfig};

#[derive(Parser)]
#[command(name = "proximap", version, about = "Noise-matched MAP denoising and plug-and-play solvers on Gaussian-mixture worlds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the noise schedule for one measurement noise level as CSV.
    Schedule {
        #[arg(long)]
        sigma_y: f64,
        #[arg(long, default_value_t = 10.0)]
        tau_mul: f64,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, default_value_t = 0.005)]
        sigma_final: f64,
    },
    /// Standalone denoising bench from a JSON config.
    DenoiseBench {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory for per-seed rows (`denoise.csv`) and the summary.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Naive MAP iteration against ProxiMAP under a biased score.
    Diagnose {
        #[arg(long)]
        delta2: Option<f64>,
        #[arg(long, default_value_t = 200)]
        seeds: usize,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run one solver on one task over a synthetic dataset.
    PnpRun {
        #[arg(long)]
        task: TaskKind,
        #[arg(long)]
        algorithm: Algorithm,
        #[arg(long, default_value = "mmse")]
        mode: DenoiseMode,
        /// Experiment config; its world, image count, seed and denoiser are used.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "runs/pnp")]
        out: PathBuf,
    },
    /// Random-search tuning with Pareto-front selection.
    Tune {
        #[arg(long)]
        task: TaskKind,
        #[arg(long)]
        algorithm: Algorithm,
        #[arg(long, default_value = "mmse")]
        mode: DenoiseMode,
        /// Number of random configurations.
        #[arg(long, default_value_t = 30)]
        budget: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Writes `tune.json` (all candidates and the front) here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render the SVG metric plot of a finished experiment.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve a GMM denoiser over stdin/stdout (external denoiser protocol).
    #[command(hide = true)]
    ServeGmm {
        #[arg(long)]
        prior: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        delta2: f64,
    },
}

fn load_json<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => Ok(serde_json::from_str(&std::fs::read_to_string(p)?)?),
        None => Ok(T::default()),
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn experiment_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = load_json(path)?;
    if cfg.n_images == 0 {
        return Err(Error::Config("n_images must be positive".into()));
    }
    Ok(cfg)
}

/// The config's task entry for `task` when present, else defaults.
fn task_spec(cfg: &ExperimentConfig, task: TaskKind) -> TaskSpec {
    cfg.tasks.iter().find(|t| t.task == task).cloned().unwrap_or_else(|| TaskSpec { task, ..TaskSpec::default() })
}

/// The config's solver entry for `algorithm` with `mode` applied, else defaults.
fn solver_config(cfg: &ExperimentConfig, algorithm: Algorithm, mode: DenoiseMode) -> SolverConfig {
    let base = cfg.solvers.iter().find(|s| s.algorithm == algorithm).cloned();
    SolverConfig { denoise_mode: mode, ..base.unwrap_or_else(|| SolverConfig::new(algorithm, mode)) }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Schedule { sigma_y, tau_mul, k, sigma_final } => {
            let cfg = ProximapConfig { tau_mul, ..ProximapConfig::with_steps(k, sigma_final) };
            let schedule = proximap_schedule(sigma_y, &cfg)?;
            eprintln!("tau = {}, beta = {}", schedule.tau(), schedule.beta());
            print!("{}", schedule.to_csv());
        }
        Command::DenoiseBench { config, out } => {
            let cfg: DenoiseBenchConfig = load_json(config.as_deref())?;
            let report = run_denoise_bench(&cfg)?;
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("denoise.csv"), report.to_csv()?)?;
                std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&report.summary)?)?;
            }
            print_json(&serde_json::json!({ "sigma_y": report.sigma_y, "summary": report.summary }))?;
        }
        Command::Diagnose { delta2, seeds, config } => {
            let mut cfg: DiagnoseConfig = load_json(config.as_deref())?;
            cfg.seeds = seeds;
            if delta2.is_some() {
                cfg.delta2 = delta2;
            }
            let mut report = run_diagnose(&cfg)?;
            report.rows.clear();
            print_json(&report)?;
        }
        Command::PnpRun { task, algorithm, mode, config, out } => {
            let base = experiment_config(config.as_deref())?;
            let cfg = ExperimentConfig {
                tasks: vec![task_spec(&base, task)],
                solvers: vec![solver_config(&base, algorithm, mode)],
                ..base
            };
            let summary = run_experiment_config(&cfg, &out)?;
            print_json(&summary)?;
        }
        Command::Tune { task, algorithm, mode, budget, config, out } => {
            let base = experiment_config(config.as_deref())?;
            let tune_budget = TuneBudget { n_random: budget, seed: base.seed, ..TuneBudget::default() };
            let prior = Arc::new(build_world(&base.world)?);
            let denoiser = base.denoiser.build(prior.clone())?;
            let spec = task_spec(&base, task);
            let (tune_idx, test_idx) = tune_budget.split();
            let dataset = synthesize_dataset(&prior, test_idx.end, base.seed);
            let instances = dataset.iter().map(|s| Instance::build(s, &spec)).collect::<Result<Vec<_>>>()?;
            let solver = solver_config(&base, algorithm, mode);
            let ranges = default_ranges(algorithm, mode);
            let pool = worker_pool()?;
            let (outcome, selected, test) = pool.install(|| -> Result<_> {
                let outcome = random_search_tune(&solver, &ranges, &tune_budget, &instances[tune_idx], &denoiser)?;
                let selected = pareto_select_min_proxy(&outcome.front)?.clone();
                let test = evaluate_config(&selected.config, &instances[test_idx], &denoiser)?;
                Ok((outcome, selected, test))
            })?;
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("tune.json"), serde_json::to_string_pretty(&outcome)?)?;
            }
            print_json(&serde_json::json!({
                "front": outcome.front,
                "selected": selected,
                "test_metrics": test,
            }))?;
        }
        Command::Report { input, out } => report(input, out)?,
        Command::ServeGmm { prior, delta2 } => {
            let prior = Arc::new(GmmPrior::from_json(&std::fs::read_to_string(prior)?)?);
            let denoiser = DenoiserHandle::biased(prior, ScoreBias::new(delta2)?);
            let stdin = std::io::stdin().lock();
            let mut stdout = std::io::stdout().lock();
            serve(stdin, &mut stdout, &denoiser)?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
