//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use proximap::bench::denoise::{run_denoise_bench, run_diagnose, DenoiseBenchConfig, DenoiseMethod, DiagnoseConfig};
use proximap::bench::experiment::{run_experiment, ExperimentConfig};
use proximap::bench::output::strip_wall_time;
use proximap::bench::tune::score;
use proximap::bench::{build_world, synthesize_dataset, Instance, TaskSpec, WorldSpec, WorldStyle};
use proximap::degradations::{gaussian_kernel, random_mask, DataFidelity, DegradationOp, TaskKind, Variant};
use proximap::gmm::{GmmPrior, ScoreBias};
use proximap::grid::{Field, Rng, Shape};
use proximap::proximap::{CountingDenoiser, DenoiserHandle};
use proximap::schedule::{build_schedule, iterate_sigma, lemma_report, solve_beta, tau_from_multiplier};
use proximap::solvers::{expected_nfe, run_solver, Algorithm, DenoiseMode, SolverConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn random_field(rng: &mut Rng, shape: Shape, lo: f64, hi: f64) -> Field {
    Field::from_fn(shape, |_, _, _| rng.uniform_range(lo, hi))
}

fn lemma_dichotomy() -> Outcome {
    let start = Instant::now();
    let mut rng = Rng::new(1);
    let mut bad = 0;
    for _ in 0..1000 {
        let sigma0 = rng.uniform_range(0.05, 2.0);
        let tau = rng.uniform_range(0.5, 1.5) * sigma0 * sigma0 / 4.0;
        let last = iterate_sigma(sigma0, tau, 0.5, 100_000);
        let vanishes = last < 1e-5;
        let predicted = tau > sigma0 * sigma0 / 4.0 + 1e-9;
        let ok = if predicted {
            vanishes
        } else {
            let upper = lemma_report(sigma0, tau).upper_fixed_point().expect("fixed point exists");
            !vanishes && (last - upper).abs() <= 1e-5
        };
        bad += usize::from(!ok);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(bad == 0 && secs < 5.0, format!("{bad}/1000 pairs disagree, {secs:.2}s"))
}

fn schedule_exactness() -> Outcome {
    let mut rng = Rng::new(2);
    let (mut rec_err, mut coef_err, mut trip_err) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let sigma_y = rng.uniform_range(0.01, 0.5);
        let tau = tau_from_multiplier(rng.uniform_range(1.5, 20.0), sigma_y).unwrap();
        let beta = rng.uniform_range(0.05, 0.95);
        let steps = 1 + (rng.uniform() * 30.0) as usize;
        let s = build_schedule(sigma_y, tau, beta, steps).unwrap();
        for k in 0..steps {
            let (sk, gk) = (s.sigma()[k], s.gamma()[k]);
            rec_err = rec_err.max((s.sigma()[k + 1] - ((1.0 - beta) * sk + gk * sigma_y)).abs());
            coef_err = coef_err.max(((1.0 - gk * (1.0 + tau / (sk * sk))) - (1.0 - beta)).abs());
        }
        let target = rng.uniform_range(0.001, 0.1) * sigma_y;
        let (tau, steps) = (tau_from_multiplier(10.0, sigma_y).unwrap(), steps.max(4));
        let beta = solve_beta(sigma_y, tau, steps, target).unwrap();
        let s = build_schedule(sigma_y, tau, beta, steps).unwrap();
        trip_err = trip_err.max((s.sigma_final() - target).abs());
    }
    outcome(
        rec_err <= 1e-15 && coef_err <= 1e-15 && trip_err <= 1e-9,
        format!("recursion {rec_err:.1e}, coefficient identity {coef_err:.1e}, beta round trip {trip_err:.1e}"),
    )
}

fn oracle_consistency() -> Outcome {
    let mut rng = Rng::new(3);
    let shape = Shape::new(4, 4, 1).unwrap();
    let (mut tweedie, mut fd, mut prox) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..20 {
        let n = 1 + (rng.uniform() * 4.0) as usize;
        let means: Vec<Field> = (0..n).map(|_| random_field(&mut rng, shape, 0.0, 1.0)).collect();
        let s2 = rng.uniform_range(0.01, 0.1);
        let prior = GmmPrior::uniform(means, s2).unwrap();
        let x = random_field(&mut rng, shape, 0.0, 1.0);
        let sigma = rng.uniform_range(0.01, 0.5);
        let d = prior.mmse_denoise(&x, sigma, ScoreBias::EXACT).unwrap();
        let score = prior.score_smoothed(&x, sigma, ScoreBias::EXACT).unwrap();
        let mut t = x.clone();
        t.axpy(sigma * sigma, &score);
        tweedie = tweedie.max(d.max_abs_diff(&t));
        let h = 1e-5;
        for i in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp.data_mut()[i] += h;
            xm.data_mut()[i] -= h;
            let num = (prior.log_density_smoothed(&xp, sigma).unwrap() - prior.log_density_smoothed(&xm, sigma).unwrap())
                / (2.0 * h);
            fd = fd.max((num - score.data()[i]).abs());
        }
    }
    for _ in 0..20 {
        let mu = random_field(&mut rng, shape, 0.0, 1.0);
        let s2 = rng.uniform_range(1e-3, 0.05);
        let prior = GmmPrior::uniform(vec![mu.clone()], s2).unwrap();
        let y = random_field(&mut rng, shape, 0.0, 1.0);
        let tau = rng.uniform_range(1e-3, 0.1);
        let got = prior.map_oracle(&y, tau.sqrt(), tau, 1).unwrap();
        let want = Field::linear_combination(&[(s2 / (s2 + tau), &y), (tau / (s2 + tau), &mu)]);
        prox = prox.max(got.max_abs_diff(&want));
    }
    outcome(
        tweedie <= 1e-12 && fd <= 1e-6 && prox <= 1e-8,
        format!("Tweedie {tweedie:.1e}, score vs finite differences {fd:.1e}, MAP oracle {prox:.1e}"),
    )
}

fn diagnosis() -> Outcome {
    let start = Instant::now();
    let r = run_diagnose(&DiagnoseConfig::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        r.exact_within_5s >= 0.95 && r.naive_farther_than_proximap >= 0.8 && secs < 120.0,
        format!(
            "exact naive within 5s: {:.1}%; biased naive farther than ProxiMAP: {:.1}% (median distance naive {:.2e}, ProxiMAP {:.2e}); {secs:.1}s",
            100.0 * r.exact_within_5s,
            100.0 * r.naive_farther_than_proximap,
            r.median_naive_biased,
            r.median_proximap_biased
        ),
    )
}

fn two_mode_bench(methods: Vec<DenoiseMethod>) -> DenoiseBenchConfig {
    DenoiseBenchConfig { n_seeds: 200, methods, ..DenoiseBenchConfig::default() }
}

/// σ_final at the top of the usual tuning range relative to σ_y.
fn bench_sigma_final(cfg: &DenoiseBenchConfig) -> f64 {
    let prior = cfg.prior.build().unwrap();
    0.1 * 0.5 * proximap::bench::denoise::min_mode_gap(&prior)
}

fn map_beats_mmse() -> Outcome {
    let probe = two_mode_bench(vec![]);
    let pm = DenoiseMethod::Proximap { steps: 8, sigma_final: bench_sigma_final(&probe) };
    let cfg = two_mode_bench(vec![DenoiseMethod::Mmse, pm]);
    let r = run_denoise_bench(&cfg).unwrap();
    let (mmse, prox) = (r.method_rows("mmse"), r.method_rows(&pm.label()));
    let higher = mmse.iter().zip(&prox).filter(|(m, p)| p.cond_log_density >= m.cond_log_density).count();
    let (dm, dp) = (r.summary[0].median_mode_distance, r.summary[1].median_mode_distance);
    let frac = higher as f64 / mmse.len() as f64;
    outcome(
        dp < dm && frac >= 0.9,
        format!(
            "median distance ProxiMAP {dp:.3e} vs MMSE {dm:.3e}; conditional log-density higher on {:.1}%",
            100.0 * frac
        ),
    )
}

fn k_saturation() -> Outcome {
    let probe = two_mode_bench(vec![]);
    let sf = bench_sigma_final(&probe);
    let cfg = two_mode_bench(
        [1, 8, 16].iter().map(|&steps| DenoiseMethod::Proximap { steps, sigma_final: sf }).collect(),
    );
    let r = run_denoise_bench(&cfg).unwrap();
    let d: Vec<f64> = r.summary.iter().map(|s| s.median_mode_distance).collect();
    let (gain_8, gain_16) = (d[0] - d[1], d[1] - d[2]);
    outcome(
        gain_8 > 0.0 && gain_16 < 0.1 * gain_8,
        format!("median distance K=1 {:.3e}, K=8 {:.3e}, K=16 {:.3e}", d[0], d[1], d[2]),
    )
}

fn prox_correctness() -> Outcome {
    let mut rng = Rng::new(7);
    let xs = Shape::new(32, 32, 1).unwrap();
    let spec = TaskSpec::new(TaskKind::MotionBlur, 0.05);
    let ops = vec![
        DegradationOp::new(Variant::GaussianBlur { kernel: gaussian_kernel(31, 3.0).unwrap() }, 0.05).unwrap(),
        spec.build_op(xs, &mut rng).unwrap(),
        DegradationOp::new(Variant::Inpaint { mask: random_mask(&mut rng, 32, 32, 0.7).unwrap() }, 0.05).unwrap(),
        DegradationOp::new(Variant::SuperResolution { factor: 4 }, 0.05).unwrap(),
        DegradationOp::new(Variant::PhaseRetrieval, 0.05).unwrap(),
    ];
    let (mut residual, mut agree) = (0.0f64, 0.0f64);
    for op in ops {
        let closed_form = matches!(op.kind(), TaskKind::GaussianBlur | TaskKind::MotionBlur | TaskKind::Inpaint);
        let y = random_field(&mut rng, op.output_shape(xs).unwrap(), 0.0, 1.0);
        let fid = DataFidelity::new(op, y).unwrap();
        for gamma in [1e-4, 1e-2, 1.0] {
            let z = random_field(&mut rng, xs, 0.0, 1.0);
            let x = fid.prox(&z, gamma).unwrap();
            let mut r = x.sub(&z);
            r.axpy(gamma, &fid.grad(&x).unwrap());
            residual = residual.max(r.norm());
            if closed_form {
                agree = agree.max(x.max_abs_diff(&fid.prox_cg(&z, gamma).unwrap()));
            }
        }
    }
    outcome(
        residual <= 1e-7 && agree <= 1e-8,
        format!("max optimality residual {residual:.1e}, Fourier vs CG {agree:.1e}"),
    )
}

fn nfe_accounting() -> Outcome {
    let world = WorldSpec { height: 16, width: 16, ..WorldSpec::default() };
    let prior = Arc::new(build_world(&world).unwrap());
    let den = DenoiserHandle::exact(prior.clone());
    let sample = &synthesize_dataset(&prior, 1, 0)[0];
    let inst = Instance::build(sample, &TaskSpec { kernel_size: Some(9), ..TaskSpec::new(TaskKind::GaussianBlur, 0.05) }).unwrap();
    let mut seen = Vec::new();
    let mut ok = true;
    for alg in [Algorithm::Dpir, Algorithm::Diffpir] {
        for (mode, want) in [(DenoiseMode::Mmse, 20), (DenoiseMode::Proximap, 160), (DenoiseMode::Hybrid(19), 27)] {
            let cfg = SolverConfig::new(alg, mode);
            let counter = CountingDenoiser::new(&den);
            let rec = run_solver(&inst.fidelity, &counter, &cfg).unwrap();
            ok &= rec.nfe == want && counter.calls() == want && expected_nfe(&cfg) == want;
            seen.push(format!("{alg} {mode}={}", rec.nfe));
        }
    }
    outcome(ok, seen.join(", "))
}

fn end_to_end_direction() -> Outcome {
    let start = Instant::now();
    let world = WorldSpec { style: WorldStyle::Textured, seed: 3, ..WorldSpec::default() };
    let prior = Arc::new(build_world(&world).unwrap());
    let den = DenoiserHandle::exact(prior.clone());
    let data = synthesize_dataset(&prior, 20, 5);
    let mut pass = true;
    let mut parts = Vec::new();
    for task in [TaskKind::GaussianBlur, TaskKind::Inpaint, TaskKind::SuperResolution] {
        let spec = TaskSpec::new(task, 0.05);
        let instances: Vec<Instance> = data.iter().map(|s| Instance::build(s, &spec).unwrap()).collect();
        for alg in [Algorithm::Dpir, Algorithm::Diffpir] {
            let mut wins = 0;
            for inst in &instances {
                let run = |mode| {
                    let cfg = SolverConfig { seed: inst.sample.seed, ..SolverConfig::new(alg, mode) };
                    let rec = run_solver(&inst.fidelity, &den, &cfg).unwrap();
                    let psnr = score(task, rec.output(), inst.truth()).unwrap().psnr;
                    (prior.nearest_mode_distance(rec.output()).unwrap(), psnr)
                };
                let (d_mmse, p_mmse) = run(DenoiseMode::Mmse);
                let (d_hyb, p_hyb) = run(DenoiseMode::Hybrid(19));
                wins += usize::from(d_hyb <= d_mmse && p_hyb >= p_mmse - 0.3);
            }
            pass &= wins * 10 >= 6 * instances.len();
            parts.push(format!("{} {alg} {wins}/{}", task.name(), instances.len()));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(pass && secs < 600.0, format!("{}; {secs:.1}s", parts.join(", ")))
}

fn files_under(root: &Path) -> Vec<String> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_string_lossy().into_owned());
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        world: WorldSpec { height: 16, width: 16, ..WorldSpec::default() },
        tasks: vec![
            TaskSpec::new(TaskKind::MotionBlur, 0.05),
            TaskSpec::new(TaskKind::SuperResolution, 0.05),
            TaskSpec::new(TaskKind::Inpaint, 0.05),
        ],
        solvers: vec![
            SolverConfig { outer_iters: Some(5), ..SolverConfig::new(Algorithm::Dpir, DenoiseMode::Hybrid(4)) },
            SolverConfig { outer_iters: Some(5), ..SolverConfig::new(Algorithm::Diffpir, DenoiseMode::Mmse) },
            SolverConfig { outer_iters: Some(3), ..SolverConfig::new(Algorithm::Daps, DenoiseMode::Mmse) },
        ],
        n_images: 3,
        seed: 42,
        ..ExperimentConfig::default()
    };
    let config = dir.path().join("config.json");
    std::fs::write(&config, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_experiment(&config, &a).unwrap();
    run_experiment(&config, &b).unwrap();
    let csv = |d: &Path| strip_wall_time(&std::fs::read_to_string(d.join("results.csv")).unwrap());
    let csv_same = csv(&a) == csv(&b);
    let pnms: Vec<String> = files_under(&a).into_iter().filter(|f| f.ends_with(".pnm")).collect();
    let differing = pnms
        .iter()
        .filter(|f| std::fs::read(a.join(f)).unwrap() != std::fs::read(b.join(f)).unwrap())
        .count();
    outcome(
        csv_same && differing == 0 && !pnms.is_empty(),
        format!("CSV identical: {csv_same}; {differing}/{} PNM files differ", pnms.len()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("schedule fixed-point dichotomy", lemma_dichotomy),
        ("schedule exactness", schedule_exactness),
        ("oracle consistency", oracle_consistency),
        ("naive MAP diagnosis under score bias", diagnosis),
        ("MAP beats MMSE on a two-mode prior", map_beats_mmse),
        ("K saturation", k_saturation),
        ("prox correctness", prox_correctness),
        ("NFE accounting", nfe_accounting),
        ("end-to-end hybrid vs MMSE direction", end_to_end_direction),
        ("experiment determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let tag = if result.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!result.pass);
        println!("{tag} criterion {}: {name}: {}", i + 1, result.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
