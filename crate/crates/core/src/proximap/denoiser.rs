use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::gmm::{GmmPrior, ScoreBias};
use crate::grid::Field;

use super::external::ExternalDenoiser;

/// A Gaussian denoiser `D(x, σ) ≈ E[X | X + σε = x]`.
pub trait Denoiser: Send + Sync {
    fn denoise(&self, x: &Field, sigma: f64) -> Result<Field>;
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn denoise(&self, x: &Field, sigma: f64) -> Result<Field> {
        (**self).denoise(x, sigma)
    }
}

impl<D: Denoiser + ?Sized> Denoiser for Arc<D> {
    fn denoise(&self, x: &Field, sigma: f64) -> Result<Field> {
        (**self).denoise(x, sigma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DenoiserKind {
    GmmExact,
    GmmBiased { delta2: f64 },
    External,
}

/// The denoisers a solver can be pointed at.
pub enum DenoiserHandle {
    GmmExact(Arc<GmmPrior>),
    GmmBiased(Arc<GmmPrior>, ScoreBias),
    External(ExternalDenoiser),
}

impl DenoiserHandle {
    pub fn exact(prior: Arc<GmmPrior>) -> Self {
        DenoiserHandle::GmmExact(prior)
    }

    pub fn biased(prior: Arc<GmmPrior>, bias: ScoreBias) -> Self {
        if bias.is_exact() {
            DenoiserHandle::GmmExact(prior)
        } else {
            DenoiserHandle::GmmBiased(prior, bias)
        }
    }

    pub fn kind(&self) -> DenoiserKind {
        match self {
            DenoiserHandle::GmmExact(_) => DenoiserKind::GmmExact,
            DenoiserHandle::GmmBiased(_, b) => DenoiserKind::GmmBiased { delta2: b.delta2() },
            DenoiserHandle::External(_) => DenoiserKind::External,
        }
    }
}

impl Denoiser for DenoiserHandle {
    fn denoise(&self, x: &Field, sigma: f64) -> Result<Field> {
        let out = match self {
            DenoiserHandle::GmmExact(p) => p.mmse_denoise(x, sigma, ScoreBias::EXACT)?,
            DenoiserHandle::GmmBiased(p, b) => p.mmse_denoise(x, sigma, *b)?,
            DenoiserHandle::External(e) => e.denoise(x, sigma)?,
        };
        if out.shape() != x.shape() {
            return Err(Error::Denoiser(format!("returned {} for input {}", out.shape(), x.shape())));
        }
        if !out.is_finite() {
            return Err(Error::Denoiser(format!("non-finite output at sigma = {sigma}")));
        }
        Ok(out)
    }
}

/// Wraps a denoiser and counts evaluations (NFE).
pub struct CountingDenoiser<'a> {
    inner: &'a dyn Denoiser,
    calls: AtomicUsize,
}

impl<'a> CountingDenoiser<'a> {
    pub fn new(inner: &'a dyn Denoiser) -> Self {
        Self { inner, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl Denoiser for CountingDenoiser<'_> {
    fn denoise(&self, x: &Field, sigma: f64) -> Result<Field> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.denoise(x, sigma)
    }
}

/// Adapts a closure, mostly for tests and oracles.
pub struct FnDenoiser<F>(pub F);

impl<F> Denoiser for FnDenoiser<F>
where
    F: Fn(&Field, f64) -> Result<Field> + Send + Sync,
{
    fn denoise(&self, x: &Field, sigma: f64) -> Result<Field> {
        (self.0)(x, sigma)
    }
}
