//! Forward operators for the restoration tasks, their adjoints, data-fidelity
//! gradients and proximal maps. All boundaries are circular.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{dft2, idft2, kernel_transfer, ComplexField, Field, Rng, Shape};

pub const KERNEL_SIZE: usize = 61;
pub const GAUSSIAN_KERNEL_STD: f64 = 3.0;
pub const SR_FACTOR: usize = 4;
/// Value written into the missing pixels of an inpainting observation.
pub const INPAINT_FILL: f64 = 0.5;

const BICUBIC_A: f64 = -0.5;
const SR_TAP_OFFSETS: std::ops::RangeInclusive<i64> = -3..=4;
const CG_TOL: f64 = 1e-8;
const CG_MAX_ITER: usize = 500;

/// Task identifiers used by configs, CSV rows and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    GaussianBlur,
    MotionBlur,
    SuperResolution,
    Inpaint,
    Hdr,
    PhaseRetrieval,
}

impl TaskKind {
    pub const ALL: [TaskKind; 6] = [
        TaskKind::GaussianBlur,
        TaskKind::MotionBlur,
        TaskKind::SuperResolution,
        TaskKind::Inpaint,
        TaskKind::Hdr,
        TaskKind::PhaseRetrieval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::GaussianBlur => "gaussian_blur",
            TaskKind::MotionBlur => "motion_blur",
            TaskKind::SuperResolution => "super_resolution",
            TaskKind::Inpaint => "inpaint",
            TaskKind::Hdr => "hdr",
            TaskKind::PhaseRetrieval => "phase_retrieval",
        }
    }

    pub fn is_linear(self) -> bool {
        !matches!(self, TaskKind::Hdr)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        match norm.as_str() {
            "gaussian_blur" | "deblur" | "deblur_gaussian" => Ok(TaskKind::GaussianBlur),
            "motion_blur" | "deblur_motion" => Ok(TaskKind::MotionBlur),
            "super_resolution" | "sr" | "sr4" => Ok(TaskKind::SuperResolution),
            "inpaint" | "inpainting" => Ok(TaskKind::Inpaint),
            "hdr" => Ok(TaskKind::Hdr),
            "phase_retrieval" | "pr" => Ok(TaskKind::PhaseRetrieval),
            _ => Err(Error::Config(format!("unknown task {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Variant {
    GaussianBlur { kernel: Field },
    MotionBlur { kernel: Field },
    SuperResolution { factor: usize },
    /// Single-channel {0,1} mask, broadcast over channels. 1 marks an observed pixel.
    Inpaint { mask: Field },
    Hdr,
    PhaseRetrieval,
}

impl Variant {
    pub fn kind(&self) -> TaskKind {
        match self {
            Variant::GaussianBlur { .. } => TaskKind::GaussianBlur,
            Variant::MotionBlur { .. } => TaskKind::MotionBlur,
            Variant::SuperResolution { .. } => TaskKind::SuperResolution,
            Variant::Inpaint { .. } => TaskKind::Inpaint,
            Variant::Hdr => TaskKind::Hdr,
            Variant::PhaseRetrieval => TaskKind::PhaseRetrieval,
        }
    }
}

/// A forward model `y = A(x) + σ_y ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct DegradationOp {
    variant: Variant,
    sigma_y: f64,
}

impl DegradationOp {
    pub fn new(variant: Variant, sigma_y: f64) -> Result<Self> {
        if !(sigma_y >= 0.0 && sigma_y.is_finite()) {
            return Err(Error::domain(format!("sigma_y must be finite and nonnegative, got {sigma_y}")));
        }
        match &variant {
            Variant::GaussianBlur { kernel } | Variant::MotionBlur { kernel } => {
                if kernel.channels() != 1 || kernel.height() % 2 == 0 || kernel.width() % 2 == 0 {
                    return Err(Error::shape(format!(
                        "blur kernel must be single-channel with odd sides, got {}",
                        kernel.shape()
                    )));
                }
            }
            Variant::SuperResolution { factor } => {
                if *factor == 0 {
                    return Err(Error::domain("super-resolution factor must be positive"));
                }
            }
            Variant::Inpaint { mask } => {
                if mask.channels() != 1 {
                    return Err(Error::shape("inpainting mask must be single-channel"));
                }
                if mask.data().iter().any(|&m| m != 0.0 && m != 1.0) {
                    return Err(Error::domain("inpainting mask must be {0,1}-valued"));
                }
            }
            Variant::Hdr | Variant::PhaseRetrieval => {}
        }
        Ok(Self { variant, sigma_y })
    }

    pub fn variant(&self) -> &Variant {
        &self.variant
    }

    pub fn kind(&self) -> TaskKind {
        self.variant.kind()
    }

    pub fn sigma_y(&self) -> f64 {
        self.sigma_y
    }

    pub fn with_sigma_y(&self, sigma_y: f64) -> Result<Self> {
        Self::new(self.variant.clone(), sigma_y)
    }

    pub fn is_linear(&self) -> bool {
        self.kind().is_linear()
    }

    /// Shape of `A(x)` for an input of shape `x`.
    pub fn output_shape(&self, x: Shape) -> Result<Shape> {
        match &self.variant {
            Variant::SuperResolution { factor } => {
                if x.height % factor != 0 || x.width % factor != 0 {
                    return Err(Error::shape(format!("{x} is not divisible by factor {factor}")));
                }
                Ok(Shape { height: x.height / factor, width: x.width / factor, channels: x.channels })
            }
            _ => Ok(x),
        }
    }

    /// Shape of `x` producing an observation of shape `y`.
    pub fn input_shape(&self, y: Shape) -> Shape {
        match &self.variant {
            Variant::SuperResolution { factor } => {
                Shape { height: y.height * factor, width: y.width * factor, channels: y.channels }
            }
            _ => y,
        }
    }

    fn check_mask(&self, x: Shape) -> Result<()> {
        if let Variant::Inpaint { mask } = &self.variant {
            if mask.height() != x.height || mask.width() != x.width {
                return Err(Error::shape(format!("mask {} does not cover field {x}", mask.shape())));
            }
        }
        Ok(())
    }

    /// Transfer function of the blur kernel on the grid of `x`, if any.
    fn transfer(&self, x: Shape) -> Result<Option<ComplexField>> {
        match &self.variant {
            Variant::GaussianBlur { kernel } | Variant::MotionBlur { kernel } => {
                Ok(Some(kernel_transfer(kernel, x)?))
            }
            _ => Ok(None),
        }
    }

    pub fn apply(&self, x: &Field) -> Result<Field> {
        self.check_mask(x.shape())?;
        let transfer = self.transfer(x.shape())?;
        self.apply_with(x, transfer.as_ref())
    }

    fn apply_with(&self, x: &Field, transfer: Option<&ComplexField>) -> Result<Field> {
        match &self.variant {
            Variant::GaussianBlur { .. } | Variant::MotionBlur { .. } => {
                fourier_multiply(x, transfer.expect("blur transfer"), false)
            }
            Variant::SuperResolution { factor } => {
                let out_shape = self.output_shape(x.shape())?;
                let filtered = bicubic_correlate(x, false);
                Ok(Field::from_fn(out_shape, |r, c, ch| filtered.get(r * factor, c * factor, ch)))
            }
            Variant::Inpaint { mask } => Ok(apply_mask(x, mask)),
            Variant::Hdr => Ok(x.map(|v| (2.0 * v).clamp(0.0, 1.0))),
            Variant::PhaseRetrieval => Ok(dft2(x)?.re()),
        }
    }

    /// Adjoint of a linear operator; `hdr` has none.
    pub fn adjoint(&self, u: &Field) -> Result<Field> {
        let x_shape = self.input_shape(u.shape());
        self.check_mask(x_shape)?;
        let transfer = self.transfer(x_shape)?;
        self.adjoint_with(u, transfer.as_ref())
    }

    fn adjoint_with(&self, u: &Field, transfer: Option<&ComplexField>) -> Result<Field> {
        match &self.variant {
            Variant::GaussianBlur { .. } | Variant::MotionBlur { .. } => {
                fourier_multiply(u, transfer.expect("blur transfer"), true)
            }
            Variant::SuperResolution { factor } => {
                let mut up = Field::zeros(self.input_shape(u.shape()));
                for r in 0..u.height() {
                    for c in 0..u.width() {
                        for ch in 0..u.channels() {
                            up.set(r * factor, c * factor, ch, u.get(r, c, ch));
                        }
                    }
                }
                Ok(bicubic_correlate(&up, true))
            }
            Variant::Inpaint { mask } => Ok(apply_mask(u, mask)),
            Variant::Hdr => Err(Error::Unsupported("hdr is nonlinear and has no adjoint".into())),
            Variant::PhaseRetrieval => {
                let spectrum = ComplexField::from_real(u);
                let n = u.shape().pixels() as f64;
                Ok(idft2(&spectrum)?.scaled(n))
            }
        }
    }
}

fn apply_mask(x: &Field, mask: &Field) -> Field {
    let c = x.channels();
    let mut out = x.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        *v *= mask.data()[i / c];
    }
    out
}

fn fourier_multiply(x: &Field, transfer: &ComplexField, conjugate: bool) -> Result<Field> {
    if transfer.shape() != x.shape() {
        return Err(Error::shape(format!("transfer {} vs field {}", transfer.shape(), x.shape())));
    }
    let mut spectrum = dft2(x)?;
    for (z, h) in spectrum.data_mut().iter_mut().zip(transfer.data()) {
        *z *= if conjugate { h.conj() } else { *h };
    }
    idft2(&spectrum)
}

/// Keys cubic convolution weight.
fn bicubic_weight(t: f64) -> f64 {
    let a = BICUBIC_A;
    let t = t.abs();
    if t <= 1.0 {
        (a + 2.0) * t.powi(3) - (a + 3.0) * t.powi(2) + 1.0
    } else if t < 2.0 {
        a * t.powi(3) - 5.0 * a * t.powi(2) + 8.0 * a * t - 4.0 * a
    } else {
        0.0
    }
}

/// Normalized 8-tap antialias weights at offsets −3..=4.
pub fn bicubic_taps() -> Vec<(i64, f64)> {
    let raw: Vec<(i64, f64)> =
        SR_TAP_OFFSETS.map(|o| (o, bicubic_weight((o as f64 - 0.5) / 2.0))).collect();
    let total: f64 = raw.iter().map(|(_, w)| w).sum();
    raw.into_iter().map(|(o, w)| (o, w / total)).collect()
}

/// Separable circular filter `g[r] = Σ_o w_o x[r+o]` (or its transpose).
fn bicubic_correlate(x: &Field, transpose: bool) -> Field {
    let taps = bicubic_taps();
    let (h, w, chs) = (x.height() as i64, x.width() as i64, x.channels());
    let sign = if transpose { -1 } else { 1 };
    let mut rows = Field::zeros(x.shape());
    for r in 0..h {
        for c in 0..w {
            for ch in 0..chs {
                let v: f64 = taps
                    .iter()
                    .map(|&(o, wt)| wt * x.get(r as usize, (c + sign * o).rem_euclid(w) as usize, ch))
                    .sum();
                rows.set(r as usize, c as usize, ch, v);
            }
        }
    }
    let mut out = Field::zeros(x.shape());
    for r in 0..h {
        for c in 0..w {
            for ch in 0..chs {
                let v: f64 = taps
                    .iter()
                    .map(|&(o, wt)| wt * rows.get((r + sign * o).rem_euclid(h) as usize, c as usize, ch))
                    .sum();
                out.set(r as usize, c as usize, ch, v);
            }
        }
    }
    out
}

/// The antialias filter written as a 9×9 convolution kernel, for
/// cross-checking the `factor = 1` operator against the blur path.
pub fn bicubic_as_kernel() -> Field {
    let taps = bicubic_taps();
    let weight = |o: i64| taps.iter().find(|(t, _)| *t == o).map_or(0.0, |(_, w)| *w);
    let shape = Shape { height: 9, width: 9, channels: 1 };
    // convolution kernel K[m] = w_{-m}, m = i − 4
    Field::from_fn(shape, |r, c, _| weight(4 - r as i64) * weight(4 - c as i64))
}

/// `f(x) = ‖A(x) − y‖² / (2σ_y²)` together with its gradient and proximal map.
#[derive(Debug, Clone)]
pub struct DataFidelity {
    op: DegradationOp,
    y: Field,
    x_shape: Shape,
    transfer: Option<ComplexField>,
}

impl DataFidelity {
    pub fn new(op: DegradationOp, y: Field) -> Result<Self> {
        let x_shape = op.input_shape(y.shape());
        if op.output_shape(x_shape)? != y.shape() {
            return Err(Error::shape("observation shape is inconsistent with the operator"));
        }
        op.check_mask(x_shape)?;
        let transfer = op.transfer(x_shape)?;
        Ok(Self { op, y, x_shape, transfer })
    }

    pub fn op(&self) -> &DegradationOp {
        &self.op
    }

    pub fn y(&self) -> &Field {
        &self.y
    }

    pub fn sigma_y(&self) -> f64 {
        self.op.sigma_y
    }

    pub fn x_shape(&self) -> Shape {
        self.x_shape
    }

    fn check_x(&self, x: &Field) -> Result<()> {
        if x.shape() != self.x_shape {
            return Err(Error::shape(format!("expected {}, got {}", self.x_shape, x.shape())));
        }
        Ok(())
    }

    pub fn apply(&self, x: &Field) -> Result<Field> {
        self.check_x(x)?;
        self.op.apply_with(x, self.transfer.as_ref())
    }

    pub fn adjoint(&self, u: &Field) -> Result<Field> {
        if u.shape() != self.y.shape() {
            return Err(Error::shape(format!("expected {}, got {}", self.y.shape(), u.shape())));
        }
        self.op.adjoint_with(u, self.transfer.as_ref())
    }

    /// `Aᵀy`, the usual initialization of splitting solvers.
    pub fn adjoint_y(&self) -> Result<Field> {
        self.adjoint(&self.y)
    }

    fn residual(&self, x: &Field) -> Result<Field> {
        Ok(self.apply(x)?.sub(&self.y))
    }

    pub fn value(&self, x: &Field) -> Result<f64> {
        let s2 = self.sigma_y() * self.sigma_y();
        if s2 == 0.0 {
            return Err(Error::domain("fidelity value is a hard constraint when sigma_y = 0"));
        }
        Ok(self.residual(x)?.norm_sq() / (2.0 * s2))
    }

    /// `∇f(x)`; for hdr the clamp's almost-everywhere derivative is used.
    pub fn grad(&self, x: &Field) -> Result<Field> {
        let s2 = self.sigma_y() * self.sigma_y();
        if s2 == 0.0 {
            return Err(Error::domain("gradient undefined for sigma_y = 0; use the projection path"));
        }
        let r = self.residual(x)?;
        let g = match self.op.variant {
            Variant::Hdr => x.zip_map(&r, |xv, rv| {
                let t = 2.0 * xv;
                if t > 0.0 && t < 1.0 {
                    2.0 * rv
                } else {
                    0.0
                }
            }),
            _ => self.adjoint(&r)?,
        };
        Ok(g.scaled(1.0 / s2))
    }

    /// `argmin_x ½‖x − z‖² + γ f(x)` for linear operators.
    pub fn prox(&self, z: &Field, gamma: f64) -> Result<Field> {
        self.check_x(z)?;
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::domain(format!("prox weight must be finite and nonnegative, got {gamma}")));
        }
        let s2 = self.sigma_y() * self.sigma_y();
        match &self.op.variant {
            Variant::Hdr => Err(Error::Unsupported("no closed-form prox for the nonlinear hdr operator".into())),
            Variant::Inpaint { mask } => {
                let c = z.channels();
                let mut out = z.clone();
                for (i, v) in out.data_mut().iter_mut().enumerate() {
                    let m = mask.data()[i / c];
                    if m == 0.0 {
                        continue;
                    }
                    let yv = self.y.data()[i];
                    *v = if s2 == 0.0 {
                        yv
                    } else {
                        let w = gamma / s2;
                        (w * yv + *v) / (w + 1.0)
                    };
                }
                Ok(out)
            }
            _ if s2 == 0.0 => Err(Error::domain("prox needs sigma_y > 0 for this operator")),
            Variant::GaussianBlur { .. } | Variant::MotionBlur { .. } => {
                let w = gamma / s2;
                let h = self.transfer.as_ref().expect("blur transfer");
                let zf = dft2(z)?;
                let yf = dft2(&self.y)?;
                let mut out = ComplexField::zeros(z.shape());
                for (((o, hk), zk), yk) in out.data_mut().iter_mut().zip(h.data()).zip(zf.data()).zip(yf.data()) {
                    *o = (hk.conj() * yk * w + zk) / (hk.norm_sqr() * w + 1.0);
                }
                idft2(&out)
            }
            Variant::SuperResolution { .. } | Variant::PhaseRetrieval => self.prox_cg(z, gamma),
        }
    }

    /// Prox by conjugate gradients on `(I + wAᵀA)x = z + wAᵀy`, `w = γ/σ_y²`.
    /// Available for every linear operator.
    pub fn prox_cg(&self, z: &Field, gamma: f64) -> Result<Field> {
        self.check_x(z)?;
        if !self.op.is_linear() {
            return Err(Error::Unsupported("conjugate-gradient prox needs a linear operator".into()));
        }
        let s2 = self.sigma_y() * self.sigma_y();
        if s2 == 0.0 {
            return Err(Error::domain("prox needs sigma_y > 0 for this operator"));
        }
        let w = gamma / s2;
        let normal = |v: &Field| -> Result<Field> {
            let mut out = self.adjoint(&self.apply(v)?)?.scaled(w);
            out.axpy(1.0, v);
            Ok(out)
        };
        let mut b = self.adjoint_y()?.scaled(w);
        b.axpy(1.0, z);
        conjugate_gradient(normal, &b, z.clone())
    }
}

/// Solves `M x = b` for symmetric positive-definite `M`.
///
/// Stops once `‖b − Mx‖ ≤ max(1e-8, 1e-14‖b‖)`; the relative floor only
/// matters when `‖b‖` is so large that an absolute 1e-8 is below round-off.
pub fn conjugate_gradient(apply: impl Fn(&Field) -> Result<Field>, b: &Field, x0: Field) -> Result<Field> {
    let tol = CG_TOL.max(1e-14 * b.norm());
    let mut x = x0;
    let mut r = b.sub(&apply(&x)?);
    let mut p = r.clone();
    let mut rr = r.norm_sq();
    for _ in 0..CG_MAX_ITER {
        if rr.sqrt() <= tol {
            return Ok(x);
        }
        let ap = apply(&p)?;
        let alpha = rr / p.dot(&ap);
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        let rr_next = r.norm_sq();
        if !rr_next.is_finite() {
            return Err(Error::Convergence("conjugate gradient residual became non-finite".into()));
        }
        p = Field::linear_combination(&[(1.0, &r), (rr_next / rr, &p)]);
        rr = rr_next;
    }
    if rr.sqrt() <= tol {
        return Ok(x);
    }
    Err(Error::Convergence(format!(
        "conjugate gradient residual {:.3e} above {tol:.1e} after {CG_MAX_ITER} iterations",
        rr.sqrt()
    )))
}

/// Normalized isotropic Gaussian kernel of odd `size`.
pub fn gaussian_kernel(size: usize, std: f64) -> Result<Field> {
    if size % 2 == 0 {
        return Err(Error::shape(format!("kernel size {size} must be odd")));
    }
    if !(std > 0.0) {
        return Err(Error::domain(format!("kernel std must be positive, got {std}")));
    }
    let c = (size / 2) as f64;
    let shape = Shape { height: size, width: size, channels: 1 };
    let raw = Field::from_fn(shape, |r, col, _| {
        let d2 = (r as f64 - c).powi(2) + (col as f64 - c).powi(2);
        (-d2 / (2.0 * std * std)).exp()
    });
    Ok(normalized(raw))
}

/// The 61×61, std-3 Gaussian blur kernel.
pub fn make_gaussian_kernel() -> Field {
    gaussian_kernel(KERNEL_SIZE, GAUSSIAN_KERNEL_STD).expect("static kernel parameters")
}

fn normalized(k: Field) -> Field {
    let s = k.sum();
    k.scaled(1.0 / s)
}

/// Random-walk motion kernel of size 61×61.
///
/// The trajectory has length `intensity · 30` pixels, is centered on its
/// centroid, rasterized bilinearly, blurred by a 3×3 box and normalized.
/// Intensity 0 yields a single-pixel delta.
pub fn make_motion_kernel(rng: &mut Rng, intensity: f64) -> Result<Field> {
    if !(0.0..=1.0).contains(&intensity) {
        return Err(Error::domain(format!("motion intensity must lie in [0,1], got {intensity}")));
    }
    let size = KERNEL_SIZE;
    let shape = Shape { height: size, width: size, channels: 1 };
    let center = (size / 2) as f64;
    let mut kernel = Field::zeros(shape);
    if intensity == 0.0 {
        kernel.set(size / 2, size / 2, 0, 1.0);
        return Ok(kernel);
    }
    let n_steps = 64;
    let step_len = intensity * center / n_steps as f64;
    let mut angle = rng.uniform_range(0.0, std::f64::consts::TAU);
    let mut pts = vec![(0.0f64, 0.0f64)];
    for _ in 0..n_steps {
        angle += 0.3 * rng.normal();
        let (r, c) = *pts.last().unwrap();
        pts.push((r + step_len * angle.sin(), c + step_len * angle.cos()));
    }
    let n = pts.len() as f64;
    let (mr, mc) = pts.iter().fold((0.0, 0.0), |(a, b), (r, c)| (a + r / n, b + c / n));
    let limit = center - 2.0;
    for (r, c) in pts {
        let rr = (r - mr).clamp(-limit, limit) + center;
        let cc = (c - mc).clamp(-limit, limit) + center;
        let (r0, c0) = (rr.floor(), cc.floor());
        let (fr, fc) = (rr - r0, cc - c0);
        let (r0, c0) = (r0 as usize, c0 as usize);
        for (dr, wr) in [(0, 1.0 - fr), (1, fr)] {
            for (dc, wc) in [(0, 1.0 - fc), (1, fc)] {
                let idx = kernel.index(r0 + dr, c0 + dc, 0);
                kernel.data_mut()[idx] += wr * wc;
            }
        }
    }
    let boxed = Field::from_fn(shape, |r, c, _| {
        let mut s = 0.0;
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                if (0..size as i64).contains(&rr) && (0..size as i64).contains(&cc) {
                    s += kernel.get(rr as usize, cc as usize, 0);
                }
            }
        }
        s / 9.0
    });
    Ok(normalized(boxed))
}

/// Mask with exactly `round(missing_fraction · H·W)` zeros at seeded positions.
pub fn random_mask(rng: &mut Rng, height: usize, width: usize, missing_fraction: f64) -> Result<Field> {
    if !(0.0..=1.0).contains(&missing_fraction) {
        return Err(Error::domain(format!("missing fraction must lie in [0,1], got {missing_fraction}")));
    }
    let shape = Shape::new(height, width, 1)?;
    let n = height * width;
    let missing = (missing_fraction * n as f64).round() as usize;
    let mut mask = Field::filled(shape, 1.0);
    for &i in rng.permutation(n).iter().take(missing) {
        mask.data_mut()[i] = 0.0;
    }
    Ok(mask)
}

/// Mask with a missing rectangular block.
pub fn block_mask(height: usize, width: usize, top: usize, left: usize, block_h: usize, block_w: usize) -> Result<Field> {
    if top + block_h > height || left + block_w > width {
        return Err(Error::shape("block does not fit inside the mask"));
    }
    let shape = Shape::new(height, width, 1)?;
    Ok(Field::from_fn(shape, |r, c, _| {
        let inside = (top..top + block_h).contains(&r) && (left..left + block_w).contains(&c);
        if inside {
            0.0
        } else {
            1.0
        }
    }))
}

/// Draws `y = A(x) + σ_y ε`; missing inpainting pixels are set to 0.5.
pub fn synthesize(op: &DegradationOp, x: &Field, rng: &mut Rng) -> Result<Field> {
    let clean = op.apply(x)?;
    let noise = crate::grid::sample_gaussian(rng, clean.shape(), op.sigma_y())?;
    let mut y = clean.add(&noise);
    if let Variant::Inpaint { mask } = op.variant() {
        let c = y.channels();
        for (i, v) in y.data_mut().iter_mut().enumerate() {
            if mask.data()[i / c] == 0.0 {
                *v = INPAINT_FILL;
            }
        }
    }
    Ok(y)
}

/// Circular vertical flip `r → (H − r) mod H`, fixing row 0.
pub fn flip_vertical_circular(x: &Field) -> Field {
    let h = x.height();
    Field::from_fn(x.shape(), |r, c, ch| x.get((h - r) % h, c, ch))
}

/// Circular point reflection `(r, c) → ((H − r) mod H, (W − c) mod W)`.
/// `Re∘DFT` is exactly invariant under this map for real inputs.
pub fn reflect_circular(x: &Field) -> Field {
    let (h, w) = (x.height(), x.width());
    Field::from_fn(x.shape(), |r, c, ch| x.get((h - r) % h, (w - c) % w, ch))
}

/// Orientations a phase-retrieval reconstruction is compared under.
pub fn flip_candidates(x: &Field) -> [Field; 3] {
    [x.clone(), flip_vertical_circular(x), reflect_circular(x)]
}

/// The orientation of `x` with the highest PSNR against `reference`.
pub fn best_orientation(x: &Field, reference: &Field) -> Result<Field> {
    let mut best: Option<(f64, Field)> = None;
    for cand in flip_candidates(x) {
        let p = crate::metrics::psnr(&cand, reference)?;
        if best.as_ref().map_or(true, |(bp, _)| p > *bp) {
            best = Some((p, cand));
        }
    }
    Ok(best.expect("three candidates").1)
}

/// Evaluates `metric` on the PSNR-best orientation of `x`.
pub fn evaluate_with_flip(
    metric: impl Fn(&Field, &Field) -> Result<f64>,
    x: &Field,
    reference: &Field,
) -> Result<f64> {
    metric(&best_orientation(x, reference)?, reference)
}
