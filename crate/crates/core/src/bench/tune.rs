//! Seeded random-search tuning over solver knobs and Pareto-front extraction
//! under (maximize PSNR, maximize sharpness proxy).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Instance;
use crate::degradations::{evaluate_with_flip, TaskKind};
use crate::error::{Error, Result};
use crate::grid::{Field, Rng};
use crate::metrics::{self, MetricPair};
use crate::proximap::Denoiser;
use crate::solvers::{run_solver, Algorithm, DenoiseMode, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Knob {
    DpirSigmaMax,
    DpirGamma,
    DiffpirLambda,
    DiffpirZeta,
    DapsLr,
    ProximapSigmaFinal,
}

impl Knob {
    pub fn set(self, cfg: &mut SolverConfig, v: f64) {
        match self {
            Knob::DpirSigmaMax => cfg.dpir.sigma_max = v,
            Knob::DpirGamma => cfg.dpir.gamma = v,
            Knob::DiffpirLambda => cfg.diffpir.lambda = v,
            Knob::DiffpirZeta => cfg.diffpir.zeta = v,
            Knob::DapsLr => cfg.daps.langevin_lr = v,
            Knob::ProximapSigmaFinal => cfg.proximap.sigma_final = v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Log,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub knob: Knob,
    pub lo: f64,
    pub hi: f64,
    pub scale: Scale,
}

impl ParamRange {
    pub fn log(knob: Knob, lo: f64, hi: f64) -> Self {
        Self { knob, lo, hi, scale: Scale::Log }
    }

    pub fn uniform(knob: Knob, lo: f64, hi: f64) -> Self {
        Self { knob, lo, hi, scale: Scale::Uniform }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.lo <= self.hi && self.lo.is_finite() && self.hi.is_finite();
        if !ok || (self.scale == Scale::Log && self.lo <= 0.0) {
            return Err(Error::Config(format!("invalid range for {:?}: [{}, {}]", self.knob, self.lo, self.hi)));
        }
        Ok(())
    }

    fn draw(&self, rng: &mut Rng) -> f64 {
        match self.scale {
            Scale::Uniform => rng.uniform_range(self.lo, self.hi),
            Scale::Log => rng.uniform_range(self.lo.ln(), self.hi.ln()).exp(),
        }
    }
}

/// Search ranges for an algorithm and denoising mode.
pub fn default_ranges(algorithm: Algorithm, mode: DenoiseMode) -> Vec<ParamRange> {
    let mut r = match algorithm {
        Algorithm::Dpir => vec![
            ParamRange::log(Knob::DpirSigmaMax, 0.001, 100.0),
            ParamRange::log(Knob::DpirGamma, 0.1, 40.0),
        ],
        Algorithm::Diffpir => vec![
            ParamRange::log(Knob::DiffpirLambda, 0.1, 30.0),
            ParamRange::uniform(Knob::DiffpirZeta, 0.0, 1.0),
        ],
        Algorithm::Daps | Algorithm::DapsProximap => vec![ParamRange::log(Knob::DapsLr, 1e-6, 2e-4)],
        Algorithm::CondDdim | Algorithm::CondIndi | Algorithm::CondFm => vec![],
    };
    if mode != DenoiseMode::Mmse || algorithm == Algorithm::DapsProximap {
        r.push(ParamRange::log(Knob::ProximapSigmaFinal, 0.001, 0.2));
    }
    r
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneBudget {
    pub n_random: usize,
    pub tune_set_size: usize,
    pub test_set_size: usize,
    pub seed: u64,
}

impl Default for TuneBudget {
    fn default() -> Self {
        Self { n_random: 30, tune_set_size: 6, test_set_size: 14, seed: 0 }
    }
}

impl TuneBudget {
    /// Disjoint index sets: the first `tune_set_size` images tune, the next
    /// `test_set_size` test.
    pub fn split(&self) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        (0..self.tune_set_size, self.tune_set_size..self.tune_set_size + self.test_set_size)
    }
}

/// Per-image metrics; phase retrieval is scored on the PSNR-best orientation.
pub fn score(task: TaskKind, x: &Field, truth: &Field) -> Result<MetricPair> {
    if task == TaskKind::PhaseRetrieval {
        let oriented = crate::degradations::best_orientation(x, truth)?;
        let pair = MetricPair::evaluate(&oriented, truth)?;
        debug_assert_eq!(pair.psnr, evaluate_with_flip(metrics::psnr, x, truth)?);
        return Ok(pair);
    }
    MetricPair::evaluate(x, truth)
}

/// Mean of per-image metrics.
pub fn mean_metrics(pairs: &[MetricPair]) -> MetricPair {
    let n = pairs.len() as f64;
    MetricPair {
        psnr: pairs.iter().map(|p| p.psnr).sum::<f64>() / n,
        sharpness: pairs.iter().map(|p| p.sharpness).sum::<f64>() / n,
        mse: pairs.iter().map(|p| p.mse).sum::<f64>() / n,
    }
}

/// Runs `cfg` on every instance (image seed as solver seed) and averages.
pub fn evaluate_config(cfg: &SolverConfig, instances: &[Instance], denoiser: &dyn Denoiser) -> Result<MetricPair> {
    let pairs = instances
        .par_iter()
        .map(|inst| {
            let run_cfg = SolverConfig { seed: inst.sample.seed, ..cfg.clone() };
            let rec = run_solver(&inst.fidelity, denoiser, &run_cfg)?;
            score(inst.fidelity.op().kind(), rec.output(), inst.truth())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_metrics(&pairs))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Candidate {
    pub config: SolverConfig,
    pub metrics: Option<MetricPair>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontMember {
    pub config: SolverConfig,
    pub metrics: MetricPair,
}

/// Non-dominated configurations, sorted by decreasing PSNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    pub members: Vec<FrontMember>,
}

/// Indices of the non-dominated points, in input order.
///
/// Sweeps points by decreasing PSNR; a point survives iff it has the largest
/// sharpness among points with equal PSNR and strictly exceeds the sharpness
/// of every point with higher PSNR.
pub fn pareto_indices(points: &[MetricPair]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[b].psnr.total_cmp(&points[a].psnr));
    let mut keep = Vec::new();
    let mut best_higher = f64::NEG_INFINITY;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && points[order[j]].psnr == points[order[i]].psnr {
            j += 1;
        }
        let group_max = order[i..j].iter().map(|&k| points[k].sharpness).fold(f64::NEG_INFINITY, f64::max);
        if group_max > best_higher {
            keep.extend(order[i..j].iter().copied().filter(|&k| points[k].sharpness == group_max));
        }
        best_higher = best_higher.max(group_max);
        i = j;
    }
    keep.sort_unstable();
    keep
}

impl ParetoFront {
    pub fn from_candidates(candidates: &[Candidate]) -> Self {
        let viable: Vec<(&SolverConfig, MetricPair)> =
            candidates.iter().filter_map(|c| c.metrics.map(|m| (&c.config, m))).collect();
        let points: Vec<MetricPair> = viable.iter().map(|(_, m)| *m).collect();
        let mut members: Vec<FrontMember> = pareto_indices(&points)
            .into_iter()
            .map(|i| FrontMember { config: viable[i].0.clone(), metrics: viable[i].1 })
            .collect();
        members.sort_by(|a, b| {
            b.metrics.psnr.total_cmp(&a.metrics.psnr).then_with(|| a.config.hash().cmp(&b.config.hash()))
        });
        Self { members }
    }
}

/// The sharpest member; ties go to higher PSNR, then the smaller config hash.
pub fn pareto_select_min_proxy(front: &ParetoFront) -> Result<&FrontMember> {
    front
        .members
        .iter()
        .max_by(|a, b| {
            a.metrics
                .sharpness
                .total_cmp(&b.metrics.sharpness)
                .then(a.metrics.psnr.total_cmp(&b.metrics.psnr))
                .then_with(|| b.config.hash().cmp(&a.config.hash()))
        })
        .ok_or_else(|| Error::domain("cannot select from an empty Pareto front"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuneOutcome {
    pub candidates: Vec<Candidate>,
    pub front: ParetoFront,
}

/// Draws `budget.n_random` configurations around `base`, evaluates each on
/// `tune_set` and returns all candidates with their Pareto front.
pub fn random_search_tune(
    base: &SolverConfig,
    ranges: &[ParamRange],
    budget: &TuneBudget,
    tune_set: &[Instance],
    denoiser: &dyn Denoiser,
) -> Result<TuneOutcome> {
    if budget.n_random == 0 {
        return Err(Error::Config("tuning budget must be at least 1".into()));
    }
    if tune_set.is_empty() {
        return Err(Error::Config("tuning set is empty".into()));
    }
    for r in ranges {
        r.validate()?;
    }
    let mut rng = Rng::derive(budget.seed, 0x7475_6e65);
    let configs: Vec<SolverConfig> = (0..budget.n_random)
        .map(|_| {
            let mut cfg = base.clone();
            for r in ranges {
                r.knob.set(&mut cfg, r.draw(&mut rng));
            }
            cfg
        })
        .collect();
    let candidates: Vec<Candidate> = configs
        .into_par_iter()
        .map(|config| match evaluate_config(&config, tune_set, denoiser) {
            Ok(m) => Candidate { config, metrics: Some(m), error: None },
            Err(e) => Candidate { config, metrics: None, error: Some(e.to_string()) },
        })
        .collect();
    if candidates.iter().all(|c| c.metrics.is_none()) {
        let first = candidates[0].error.clone().unwrap_or_default();
        return Err(Error::NoViableConfig(format!("all {} candidates failed; first error: {first}", candidates.len())));
    }
    let front = ParetoFront::from_candidates(&candidates);
    Ok(TuneOutcome { candidates, front })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::bench::{build_world, synthesize_dataset, TaskSpec, WorldSpec};
    use crate::proximap::{DenoiserHandle, FnDenoiser};

    fn pair(psnr: f64, sharpness: f64) -> MetricPair {
        MetricPair { psnr, sharpness, mse: 0.0 }
    }

    fn brute_force(points: &[MetricPair]) -> Vec<usize> {
        (0..points.len()).filter(|&i| !points.iter().any(|q| q.dominates(&points[i]))).collect()
    }

    #[test]
    fn front_matches_brute_force_on_random_pairs() {
        let mut rng = Rng::new(3);
        for trial in 0..20 {
            let points: Vec<MetricPair> = (0..100)
                .map(|_| {
                    // coarse values force ties on either coordinate
                    let q = if trial % 2 == 0 { 10.0 } else { 1000.0 };
                    pair((rng.uniform() * q).round() / q * 30.0, (rng.uniform() * q).round() / q)
                })
                .collect();
            assert_eq!(pareto_indices(&points), brute_force(&points));
        }
    }

    #[test]
    fn front_of_identical_points_keeps_all() {
        let points = vec![pair(1.0, 1.0), pair(1.0, 1.0), pair(0.5, 0.5)];
        assert_eq!(pareto_indices(&points), vec![0, 1]);
    }

    fn member(psnr: f64, sharpness: f64, seed: u64) -> FrontMember {
        FrontMember { config: SolverConfig { seed, ..SolverConfig::default() }, metrics: pair(psnr, sharpness) }
    }

    #[test]
    fn select_min_proxy_rules() {
        let single = ParetoFront { members: vec![member(20.0, 0.5, 0)] };
        assert_eq!(pareto_select_min_proxy(&single).unwrap().metrics.psnr, 20.0);

        let two = ParetoFront { members: vec![member(25.0, 0.6, 0), member(20.0, 0.8, 1)] };
        assert_eq!(pareto_select_min_proxy(&two).unwrap().metrics.sharpness, 0.8);

        let tie = ParetoFront { members: vec![member(21.0, 0.7, 0), member(22.0, 0.7, 1)] };
        assert_eq!(pareto_select_min_proxy(&tie).unwrap().metrics.psnr, 22.0);

        let (a, b) = (member(22.0, 0.7, 5), member(22.0, 0.7, 6));
        let expect = if a.config.hash() < b.config.hash() { a.config.seed } else { b.config.seed };
        let full = ParetoFront { members: vec![a, b] };
        assert_eq!(pareto_select_min_proxy(&full).unwrap().config.seed, expect);

        assert!(matches!(pareto_select_min_proxy(&ParetoFront { members: vec![] }), Err(Error::Domain(_))));
    }

    fn small_problem() -> (Vec<Instance>, DenoiserHandle) {
        let spec = WorldSpec { height: 16, width: 16, modes: 2, s: 0.02, ..WorldSpec::default() };
        let prior = Arc::new(build_world(&spec).unwrap());
        let task = TaskSpec { kernel_size: Some(5), kernel_std: 1.0, ..TaskSpec::default() };
        let data = synthesize_dataset(&prior, 3, 4);
        let inst = data.iter().map(|s| Instance::build(s, &task).unwrap()).collect();
        (inst, DenoiserHandle::exact(prior))
    }

    #[test]
    fn tuning_is_deterministic_and_front_is_consistent() {
        let (inst, den) = small_problem();
        let base = SolverConfig { outer_iters: Some(5), ..SolverConfig::new(Algorithm::Dpir, DenoiseMode::Mmse) };
        let ranges = default_ranges(Algorithm::Dpir, DenoiseMode::Mmse);
        let budget = TuneBudget { n_random: 8, seed: 9, ..TuneBudget::default() };
        let a = random_search_tune(&base, &ranges, &budget, &inst, &den).unwrap();
        let b = random_search_tune(&base, &ranges, &budget, &inst, &den).unwrap();
        assert_eq!(a.front, b.front);
        let pts: Vec<MetricPair> = a.candidates.iter().filter_map(|c| c.metrics).collect();
        assert_eq!(a.front.members.len(), brute_force(&pts).len());
        for r in &ranges {
            for c in &a.candidates {
                let v = match r.knob {
                    Knob::DpirSigmaMax => c.config.dpir.sigma_max,
                    Knob::DpirGamma => c.config.dpir.gamma,
                    _ => unreachable!(),
                };
                assert!(v >= r.lo && v <= r.hi);
            }
        }
    }

    #[test]
    fn budget_one_gives_singleton_front() {
        let (inst, den) = small_problem();
        let base = SolverConfig { outer_iters: Some(4), ..SolverConfig::new(Algorithm::Dpir, DenoiseMode::Mmse) };
        let budget = TuneBudget { n_random: 1, ..TuneBudget::default() };
        let out = random_search_tune(&base, &default_ranges(Algorithm::Dpir, DenoiseMode::Mmse), &budget, &inst, &den).unwrap();
        assert_eq!(out.front.members.len(), 1);
        assert_eq!(out.front.members[0].config, out.candidates[0].config);
    }

    #[test]
    fn all_diverged_is_no_viable_config() {
        let (inst, _) = small_problem();
        let nan = FnDenoiser(|x: &Field, _s: f64| Ok(x.map(|_| f64::NAN)));
        let base = SolverConfig { outer_iters: Some(3), ..SolverConfig::new(Algorithm::Dpir, DenoiseMode::Mmse) };
        let budget = TuneBudget { n_random: 3, ..TuneBudget::default() };
        let err = random_search_tune(&base, &default_ranges(Algorithm::Dpir, DenoiseMode::Mmse), &budget, &inst, &nan).unwrap_err();
        assert!(matches!(err, Error::NoViableConfig(_)));
    }

    #[test]
    fn ranges_follow_algorithm() {
        let r = default_ranges(Algorithm::Diffpir, DenoiseMode::Hybrid(19));
        assert_eq!(r.len(), 3);
        assert_eq!(r[1].scale, Scale::Uniform);
        assert!(r.iter().any(|p| p.knob == Knob::ProximapSigmaFinal));
        assert_eq!(default_ranges(Algorithm::Daps, DenoiseMode::Mmse).len(), 1);
    }
}
