//! Isotropic Gaussian-mixture prior with closed-form smoothed density, score,
//! MMSE denoiser and a brute-force MAP (proximal) oracle.
//!
//! For `p = Σ_j w_j N(μ_j, s² I)` the Gaussian-smoothed density at noise level
//! σ is again a mixture with variance `s² + σ²`, so every quantity below is exact.

use std::f64::consts::PI;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Rng, Shape};

/// Variance inflation δ² emulating the smoothing bias of a learned score.
/// `delta2 = 0` is the exact score.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreBias {
    delta2: f64,
}

impl ScoreBias {
    pub const EXACT: ScoreBias = ScoreBias { delta2: 0.0 };

    pub fn new(delta2: f64) -> Result<Self> {
        if !(delta2 >= 0.0) || !delta2.is_finite() {
            return Err(Error::domain(format!("score bias must be finite and >= 0, got {delta2}")));
        }
        Ok(Self { delta2 })
    }

    pub fn delta2(&self) -> f64 {
        self.delta2
    }

    pub fn is_exact(&self) -> bool {
        self.delta2 == 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmPrior {
    shape: Shape,
    means: Vec<Field>,
    s2: f64,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
}

const MAP_MAX_STEPS: usize = 100_000;
const MAP_GRAD_TOL: f64 = 1e-9;

impl GmmPrior {
    pub fn new(means: Vec<Field>, s2: f64, weights: Vec<f64>) -> Result<Self> {
        let Some(first) = means.first() else {
            return Err(Error::domain("mixture needs at least one component"));
        };
        let shape = first.shape();
        if let Some(m) = means.iter().find(|m| m.shape() != shape) {
            return Err(Error::shape(format!("component mean {} differs from {shape}", m.shape())));
        }
        if weights.len() != means.len() {
            return Err(Error::shape(format!(
                "{} weights for {} components",
                weights.len(),
                means.len()
            )));
        }
        if !(s2 > 0.0) || !s2.is_finite() {
            return Err(Error::domain(format!("component variance must be > 0, got {s2}")));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::domain("weights must be positive"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!("weights sum to {total}, not 1")));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(Error::domain("non-finite component mean"));
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Self { shape, means, s2, weights, log_weights })
    }

    /// Equal-weight mixture.
    pub fn uniform(means: Vec<Field>, s2: f64) -> Result<Self> {
        let n = means.len().max(1);
        Self::new(means, s2, vec![1.0 / n as f64; n])
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn means(&self) -> &[Field] {
        &self.means
    }

    pub fn s2(&self) -> f64 {
        self.s2
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_components(&self) -> usize {
        self.means.len()
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    /// Same means and weights with variance `s² + δ²`: the mixture whose exact
    /// score the biased surrogate returns.
    pub fn inflated(&self, bias: ScoreBias) -> GmmPrior {
        GmmPrior { s2: self.s2 + bias.delta2, ..self.clone() }
    }

    fn check(&self, x: &Field) -> Result<()> {
        if x.shape() != self.shape {
            return Err(Error::shape(format!("input {} does not match prior {}", x.shape(), self.shape)));
        }
        Ok(())
    }

    fn check_sigma(sigma: f64) -> Result<()> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::domain(format!("noise level must be finite and >= 0, got {sigma}")));
        }
        Ok(())
    }

    /// `log w_j − ‖x − μ_j‖² / (2 var)` for every component.
    fn log_terms(&self, x: &Field, var: f64) -> Vec<f64> {
        self.means
            .iter()
            .zip(&self.log_weights)
            .map(|(m, lw)| lw - x.dist_sq(m) / (2.0 * var))
            .collect()
    }

    /// Posterior component probabilities under variance `var`, normalized in
    /// log space with max subtraction.
    pub fn responsibilities(&self, x: &Field, var: f64) -> Vec<f64> {
        softmax(&self.log_terms(x, var))
    }

    /// `log p_σ(x)` with `p_σ = p ∗ N(0, σ² I)`.
    pub fn log_density_smoothed(&self, x: &Field, sigma: f64) -> Result<f64> {
        self.check(x)?;
        Self::check_sigma(sigma)?;
        let var = self.s2 + sigma * sigma;
        let d = self.dim() as f64;
        Ok(log_sum_exp(&self.log_terms(x, var)) - 0.5 * d * (2.0 * PI * var).ln())
    }

    /// `Σ_j w_j N(x; μ_j, var I)`-weighted mean of the component means.
    fn weighted_mean(&self, x: &Field, var: f64) -> Field {
        let r = self.responsibilities(x, var);
        let mut m = Field::zeros(self.shape);
        for (rj, mu) in r.iter().zip(&self.means) {
            if *rj > 0.0 {
                m.axpy(*rj, mu);
            }
        }
        m
    }

    /// `∇_x log p_σ(x)` of the mixture with variance `s² + σ² + δ²`.
    pub fn score_smoothed(&self, x: &Field, sigma: f64, bias: ScoreBias) -> Result<Field> {
        self.check(x)?;
        Self::check_sigma(sigma)?;
        let var = self.s2 + sigma * sigma + bias.delta2;
        let m = self.weighted_mean(x, var);
        Ok(m.zip_map(x, |mj, xj| (mj - xj) / var))
    }

    /// Tweedie estimate `x + σ² ∇ log p_σ(x)`; the exact posterior mean when the
    /// bias is zero. `σ = 0` returns `x`.
    pub fn mmse_denoise(&self, x: &Field, sigma: f64, bias: ScoreBias) -> Result<Field> {
        let score = self.score_smoothed(x, sigma, bias)?;
        if sigma == 0.0 {
            return Ok(x.clone());
        }
        let mut out = x.clone();
        out.axpy(sigma * sigma, &score);
        Ok(out)
    }

    /// `log p(x) − ‖x − y‖² / (2σ_y²)`, omitting the y-only normalizer.
    pub fn conditional_log_density(&self, x: &Field, y: &Field, sigma_y: f64) -> Result<f64> {
        if !(sigma_y > 0.0) || !sigma_y.is_finite() {
            return Err(Error::domain(format!("sigma_y must be > 0, got {sigma_y}")));
        }
        self.check(y)?;
        Ok(self.log_density_smoothed(x, 0.0)? - x.dist_sq(y) / (2.0 * sigma_y * sigma_y))
    }

    fn map_objective_and_grad(&self, x: &Field, y: &Field, tau: f64) -> (f64, Field) {
        let terms = self.log_terms(x, self.s2);
        let lse = log_sum_exp(&terms);
        let d = self.dim() as f64;
        let log_p = lse - 0.5 * d * (2.0 * PI * self.s2).ln();
        let objective = 0.5 * x.dist_sq(y) - tau * log_p;
        let r = softmax(&terms);
        let mut m = Field::zeros(self.shape);
        for (rj, mu) in r.iter().zip(&self.means) {
            if *rj > 0.0 {
                m.axpy(*rj, mu);
            }
        }
        // (x − y) − τ (m − x)/s²
        let k = tau / self.s2;
        let mut grad = Field::zeros(self.shape);
        for (((g, &xi), &yi), &mi) in grad.data_mut().iter_mut().zip(x.data()).zip(y.data()).zip(m.data()) {
            *g = (xi - yi) - k * (mi - xi);
        }
        (objective, grad)
    }

    fn descend(&self, start: Field, y: &Field, tau: f64) -> Result<(Field, f64)> {
        let base_step = 0.5 * self.s2 / (self.s2 + tau);
        let mut x = start;
        let (mut obj, mut grad) = self.map_objective_and_grad(&x, y, tau);
        for _ in 0..MAP_MAX_STEPS {
            let gnorm2 = grad.norm_sq();
            if gnorm2.sqrt() < MAP_GRAD_TOL {
                return Ok((x, obj));
            }
            // base_step <= 1/L for L = 1 + τ/s², an upper bound on the objective's
            // curvature, so the descent lemma guarantees progress. Backtracking only
            // runs while the expected decrease is resolvable in the objective.
            if base_step * gnorm2 <= 1e-12 * obj.abs().max(1.0) {
                x.axpy(-base_step, &grad);
                (obj, grad) = self.map_objective_and_grad(&x, y, tau);
                continue;
            }
            let mut step = base_step;
            let mut accepted = None;
            for _ in 0..60 {
                let mut trial = x.clone();
                trial.axpy(-step, &grad);
                let (trial_obj, trial_grad) = self.map_objective_and_grad(&trial, y, tau);
                if trial_obj <= obj - 1e-4 * step * gnorm2 {
                    accepted = Some((trial, trial_obj, trial_grad));
                    break;
                }
                step *= 0.5;
            }
            match accepted {
                Some((nx, nobj, ngrad)) => {
                    x = nx;
                    obj = nobj;
                    grad = ngrad;
                }
                // No representable decrease left: the gradient is at its rounding floor.
                None => return Ok((x, obj)),
            }
        }
        Err(Error::Convergence(format!(
            "MAP descent did not reach gradient norm {MAP_GRAD_TOL} in {MAP_MAX_STEPS} steps"
        )))
    }

    /// Brute-force `argmin_x ½‖x − y‖² − τ log p(x)` by multi-start gradient
    /// descent on the exact (unsmoothed) density.
    ///
    /// Starts from `y` and from every component mean; restarts beyond the
    /// component count start from `y` jittered at scale `sigma_y`.
    pub fn map_oracle(&self, y: &Field, sigma_y: f64, tau: f64, restarts: usize) -> Result<Field> {
        self.check(y)?;
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::domain(format!("tau must be > 0, got {tau}")));
        }
        if restarts < self.n_components() {
            return Err(Error::domain(format!(
                "need at least {} restarts, got {restarts}",
                self.n_components()
            )));
        }
        let mut starts = vec![y.clone()];
        starts.extend(self.means.iter().cloned());
        let mut rng = Rng::new(0x6d61_705f_6f72_6163);
        for _ in self.n_components()..restarts {
            let mut s = y.clone();
            for v in s.data_mut() {
                *v += sigma_y * rng.normal();
            }
            starts.push(s);
        }
        let mut best: Option<(Field, f64)> = None;
        for start in starts {
            let (x, obj) = self.descend(start, y, tau)?;
            if best.as_ref().is_none_or(|(_, b)| obj < *b) {
                best = Some((x, obj));
            }
        }
        Ok(best.expect("at least one start").0)
    }

    /// Index and Euclidean distance of the closest component mean.
    pub fn nearest_mode(&self, x: &Field) -> Result<(usize, f64)> {
        self.check(x)?;
        let (j, d2) = self
            .means
            .iter()
            .enumerate()
            .map(|(j, m)| (j, x.dist_sq(m)))
            .fold((0, f64::INFINITY), |acc, (j, d)| if d < acc.1 { (j, d) } else { acc });
        Ok((j, d2.sqrt()))
    }

    pub fn nearest_mode_distance(&self, x: &Field) -> Result<f64> {
        Ok(self.nearest_mode(x)?.1)
    }

    /// `Σ_j w_j μ_j`.
    pub fn global_mean(&self) -> Field {
        let mut m = Field::zeros(self.shape);
        for (w, mu) in self.weights.iter().zip(&self.means) {
            m.axpy(*w, mu);
        }
        m
    }

    /// Draws a component by weight, then `μ_j + s·ε`. Returns the component index too.
    pub fn sample(&self, rng: &mut Rng) -> (usize, Field) {
        let u = rng.uniform();
        let mut acc = 0.0;
        let mut j = self.n_components() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                j = i;
                break;
            }
        }
        let s = self.s2.sqrt();
        let mut x = self.means[j].clone();
        for v in x.data_mut() {
            *v += s * rng.normal();
        }
        (j, x)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = PriorFile {
            shape: [self.shape.height, self.shape.width, self.shape.channels],
            s2: self.s2,
            weights: self.weights.clone(),
            means: self.means.iter().map(|m| encode_f64_le(m.data())).collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PriorFile = serde_json::from_str(text)?;
        let shape = Shape::new(file.shape[0], file.shape[1], file.shape[2])?;
        let means = file
            .means
            .iter()
            .map(|b| Field::new(shape, decode_f64_le(b)?))
            .collect::<Result<Vec<_>>>()?;
        Self::new(means, file.s2, file.weights)
    }
}

/// On-disk prior: means are base64 strings of little-endian f64 data, one per component.
#[derive(Serialize, Deserialize)]
struct PriorFile {
    shape: [usize; 3],
    s2: f64,
    weights: Vec<f64>,
    means: Vec<String>,
}

pub(crate) fn encode_f64_le(data: &[f64]) -> String {
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
    BASE64.encode(bytes)
}

pub(crate) fn decode_f64_le(text: &str) -> Result<Vec<f64>> {
    let bytes = BASE64
        .decode(text)
        .map_err(|e| Error::Parse { offset: 0, message: format!("base64: {e}") })?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Parse { offset: bytes.len(), message: "payload is not a whole number of f64".into() });
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

pub(crate) fn softmax(terms: &[f64]) -> Vec<f64> {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = terms.iter().map(|t| (t - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
