//! Synthetic "worlds": tight Gaussian mixtures over structured patterns, with
//! exact density, score and modes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::GmmPrior;
use crate::grid::{Field, Rng, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorldStyle {
    /// Each mode is a constant patch, an edge or a stripe pattern.
    Structured,
    /// Modes come in pairs sharing a smooth base and differing only in a
    /// fine texture, so low-pass measurements cannot tell them apart.
    Textured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldSpec {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub modes: usize,
    /// Per-pixel standard deviation of every component.
    pub s: f64,
    pub style: WorldStyle,
    /// Peak-to-peak amplitude of the texture in [`WorldStyle::Textured`].
    pub texture_amplitude: f64,
    pub seed: u64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            height: 32,
            width: 32,
            channels: 1,
            modes: 4,
            s: 0.01,
            style: WorldStyle::Structured,
            texture_amplitude: 0.3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Pattern {
    Constant { level: f64 },
    Edge { lo: f64, hi: f64, nx: f64, ny: f64, offset: f64 },
    Stripes { lo: f64, hi: f64, period: f64, phase: f64, vertical: bool },
}

impl Pattern {
    fn random(rng: &mut Rng, which: usize) -> Pattern {
        let mut pair = || {
            let a = rng.uniform_range(0.15, 0.85);
            let mut b = rng.uniform_range(0.15, 0.85);
            if (a - b).abs() < 0.25 {
                b = if a < 0.5 { a + 0.35 } else { a - 0.35 };
            }
            (a, b)
        };
        match which % 3 {
            0 => Pattern::Constant { level: rng.uniform_range(0.15, 0.85) },
            1 => {
                let (lo, hi) = pair();
                let angle = rng.uniform_range(0.0, std::f64::consts::TAU);
                Pattern::Edge { lo, hi, nx: angle.cos(), ny: angle.sin(), offset: rng.uniform_range(-0.25, 0.25) }
            }
            _ => {
                let (lo, hi) = pair();
                Pattern::Stripes {
                    lo,
                    hi,
                    period: rng.uniform_range(4.0, 10.0),
                    phase: rng.uniform(),
                    vertical: rng.below(2) == 0,
                }
            }
        }
    }

    fn value(&self, r: usize, c: usize, h: usize, w: usize) -> f64 {
        match *self {
            Pattern::Constant { level } => level,
            Pattern::Edge { lo, hi, nx, ny, offset } => {
                let u = c as f64 / w as f64 - 0.5;
                let v = r as f64 / h as f64 - 0.5;
                if u * nx + v * ny > offset {
                    hi
                } else {
                    lo
                }
            }
            Pattern::Stripes { lo, hi, period, phase, vertical } => {
                let t = if vertical { c } else { r } as f64 / period + phase;
                if t.fract() < 0.5 {
                    lo
                } else {
                    hi
                }
            }
        }
    }
}

fn render(shape: Shape, rng: &mut Rng, f: impl Fn(usize, usize) -> f64) -> Field {
    let tints: Vec<f64> = (0..shape.channels).map(|_| rng.uniform_range(-0.05, 0.05)).collect();
    Field::from_fn(shape, |r, c, ch| (f(r, c) + if shape.channels > 1 { tints[ch] } else { 0.0 }).clamp(0.0, 1.0))
}

/// Builds the equal-weight mixture described by `spec`.
pub fn build_world(spec: &WorldSpec) -> Result<GmmPrior> {
    if spec.modes == 0 {
        return Err(Error::Config("a world needs at least one mode".into()));
    }
    if !(spec.s > 0.0) {
        return Err(Error::Config(format!("world s must be positive, got {}", spec.s)));
    }
    let shape = Shape::new(spec.height, spec.width, spec.channels)?;
    let (h, w) = (spec.height, spec.width);
    let mut rng = Rng::derive(spec.seed, 0x776f_726c_64);
    let mut means = Vec::with_capacity(spec.modes);
    match spec.style {
        WorldStyle::Structured => {
            for j in 0..spec.modes {
                let p = Pattern::random(&mut rng, j);
                means.push(render(shape, &mut rng, |r, c| p.value(r, c, h, w)));
            }
        }
        WorldStyle::Textured => {
            let amp = spec.texture_amplitude / 2.0;
            let mut base = Pattern::random(&mut rng, 1);
            for j in 0..spec.modes {
                if j % 2 == 0 {
                    base = Pattern::random(&mut rng, 1 + (j / 2) % 2);
                }
                // checkerboard of period 2, sign flipped between the two partners
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                let b = base;
                means.push(render(shape, &mut rng, |r, c| {
                    let texture = if (r + c) % 2 == 0 { amp } else { -amp };
                    (b.value(r, c, h, w) * (1.0 - 2.0 * amp) + amp) + sign * texture
                }));
            }
        }
    }
    GmmPrior::uniform(means, spec.s * spec.s)
}
