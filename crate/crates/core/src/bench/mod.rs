//! Desk-scale experiment harness: synthetic worlds and datasets, task
//! construction, tuning, file formats and reports.

pub mod denoise;
pub mod experiment;
pub mod output;
pub mod pnm;
pub mod tune;
pub mod world;

use serde::{Deserialize, Serialize};

use crate::degradations::{
    block_mask, gaussian_kernel, make_motion_kernel, random_mask, synthesize, DataFidelity, DegradationOp, TaskKind,
    Variant, GAUSSIAN_KERNEL_STD, KERNEL_SIZE, SR_FACTOR,
};
use crate::error::{Error, Result};
use crate::gmm::{encode_f64_le, GmmPrior};
use crate::grid::{Field, Rng, Shape};

pub use world::{build_world, WorldSpec, WorldStyle};

/// Environment variable capping the worker pool size.
pub const THREADS_ENV: &str = "PROXIMAP_THREADS";

/// Rayon pool sized by `PROXIMAP_THREADS` when set, else by rayon's default.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(Error::Config(format!("{THREADS_ENV} must be positive")));
        }
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))
}

/// SplitMix64 combination of two seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

/// How to build a degradation for a given image grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskSpec {
    pub task: TaskKind,
    pub sigma_y: f64,
    pub motion_intensity: f64,
    pub missing_fraction: f64,
    /// Block inpainting instead of random pixels; no default geometry.
    pub block: Option<BlockSpec>,
    pub sr_factor: usize,
    /// Blur kernel side; defaults to 61, clipped to the largest odd size that fits.
    pub kernel_size: Option<usize>,
    pub kernel_std: f64,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self {
            task: TaskKind::GaussianBlur,
            sigma_y: 0.05,
            motion_intensity: 0.5,
            missing_fraction: 0.7,
            block: None,
            sr_factor: SR_FACTOR,
            kernel_size: None,
            kernel_std: GAUSSIAN_KERNEL_STD,
        }
    }
}

fn fitting_kernel_size(requested: usize, shape: Shape) -> usize {
    let limit = shape.height.min(shape.width);
    let limit = if limit % 2 == 0 { limit - 1 } else { limit };
    let size = requested.min(limit);
    if size % 2 == 0 {
        size - 1
    } else {
        size
    }
}

fn center_crop(kernel: &Field, size: usize) -> Field {
    let off = (kernel.height() - size) / 2;
    let crop = Field::from_fn(Shape { height: size, width: size, channels: 1 }, |r, c, _| kernel.get(r + off, c + off, 0));
    let total = crop.sum();
    crop.scaled(1.0 / total)
}

impl TaskSpec {
    pub fn new(task: TaskKind, sigma_y: f64) -> Self {
        Self { task, sigma_y, ..Self::default() }
    }

    /// Operator for images of shape `x`; `rng` drives motion kernels and masks.
    pub fn build_op(&self, x: Shape, rng: &mut Rng) -> Result<DegradationOp> {
        let size = fitting_kernel_size(self.kernel_size.unwrap_or(KERNEL_SIZE), x);
        let variant = match self.task {
            TaskKind::GaussianBlur => Variant::GaussianBlur { kernel: gaussian_kernel(size, self.kernel_std)? },
            TaskKind::MotionBlur => {
                let full = make_motion_kernel(rng, self.motion_intensity)?;
                Variant::MotionBlur { kernel: center_crop(&full, size) }
            }
            TaskKind::SuperResolution => Variant::SuperResolution { factor: self.sr_factor },
            TaskKind::Inpaint => {
                let mask = match &self.block {
                    Some(b) => block_mask(x.height, x.width, b.top, b.left, b.height, b.width)?,
                    None => random_mask(rng, x.height, x.width, self.missing_fraction)?,
                };
                Variant::Inpaint { mask }
            }
            TaskKind::Hdr => Variant::Hdr,
            TaskKind::PhaseRetrieval => Variant::PhaseRetrieval,
        };
        DegradationOp::new(variant, self.sigma_y)
    }
}

/// One ground-truth image drawn from a world.
#[derive(Debug, Clone)]
pub struct Sample {
    pub index: usize,
    pub seed: u64,
    pub component: usize,
    pub truth: Field,
}

/// `n` images, image `i` drawn from its own derived stream.
pub fn synthesize_dataset(prior: &GmmPrior, n: usize, seed: u64) -> Vec<Sample> {
    (0..n)
        .map(|index| {
            let image_seed = mix_seed(seed, index as u64);
            let mut rng = Rng::derive(image_seed, 1);
            let (component, truth) = prior.sample(&mut rng);
            Sample { index, seed: image_seed, component, truth }
        })
        .collect()
}

/// A degraded observation of one dataset image.
#[derive(Debug, Clone)]
pub struct Instance {
    pub sample: Sample,
    pub fidelity: DataFidelity,
}

impl Instance {
    pub fn build(sample: &Sample, spec: &TaskSpec) -> Result<Self> {
        let mut rng = Rng::derive(sample.seed, 2 + spec.task as u64);
        let op = spec.build_op(sample.truth.shape(), &mut rng)?;
        let y = synthesize(&op, &sample.truth, &mut rng)?;
        Ok(Self { sample: sample.clone(), fidelity: DataFidelity::new(op, y)? })
    }

    pub fn truth(&self) -> &Field {
        &self.sample.truth
    }

    pub fn y(&self) -> &Field {
        self.fidelity.y()
    }

    /// Sidecar description of the observation.
    pub fn sidecar(&self) -> ObservationSidecar {
        let op = self.fidelity.op();
        let (kernel, mask, factor) = match op.variant() {
            Variant::GaussianBlur { kernel } | Variant::MotionBlur { kernel } => (Some(EncodedField::from(kernel)), None, None),
            Variant::Inpaint { mask } => (None, Some(EncodedField::from(mask)), None),
            Variant::SuperResolution { factor } => (None, None, Some(*factor)),
            Variant::Hdr | Variant::PhaseRetrieval => (None, None, None),
        };
        ObservationSidecar {
            task: op.kind(),
            sigma_y: op.sigma_y(),
            seed: self.sample.seed,
            index: self.sample.index,
            component: self.sample.component,
            kernel,
            mask,
            factor,
            y: EncodedField::from(self.fidelity.y()),
        }
    }
}

/// Field stored as shape plus base64 little-endian f64 data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedField {
    pub shape: [usize; 3],
    pub data: String,
}

impl From<&Field> for EncodedField {
    fn from(f: &Field) -> Self {
        Self { shape: [f.height(), f.width(), f.channels()], data: encode_f64_le(f.data()) }
    }
}

impl EncodedField {
    pub fn decode(&self) -> Result<Field> {
        let shape = Shape::new(self.shape[0], self.shape[1], self.shape[2])?;
        Field::new(shape, crate::gmm::decode_f64_le(&self.data)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSidecar {
    pub task: TaskKind,
    pub sigma_y: f64,
    pub seed: u64,
    pub index: usize,
    pub component: usize,
    pub kernel: Option<EncodedField>,
    pub mask: Option<EncodedField>,
    pub factor: Option<usize>,
    pub y: EncodedField,
}

/// Disjoint tuning/test split by image index.
pub fn split_indices(n: usize, tune_fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let n_tune = ((n as f64) * tune_fraction).round() as usize;
    ((0..n_tune).collect(), (n_tune..n).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_is_deterministic_per_index() {
        let prior = build_world(&WorldSpec::default()).unwrap();
        let a = synthesize_dataset(&prior, 5, 7);
        let b = synthesize_dataset(&prior, 3, 7);
        for i in 0..3 {
            assert_eq!(a[i].truth, b[i].truth);
            assert_eq!(a[i].seed, b[i].seed);
        }
        assert_ne!(a[0].truth, a[1].truth);
    }

    #[test]
    fn instances_are_deterministic() {
        let prior = build_world(&WorldSpec::default()).unwrap();
        let data = synthesize_dataset(&prior, 2, 1);
        for task in TaskKind::ALL {
            let spec = TaskSpec::new(task, 0.05);
            let a = Instance::build(&data[0], &spec).unwrap();
            let b = Instance::build(&data[0], &spec).unwrap();
            assert_eq!(a.y(), b.y());
            assert_eq!(a.sidecar(), b.sidecar());
            assert_eq!(a.sidecar().y.decode().unwrap(), *a.y());
        }
    }

    #[test]
    fn kernel_size_fits_small_grids() {
        let s = Shape::new(32, 32, 1).unwrap();
        assert_eq!(fitting_kernel_size(61, s), 31);
        assert_eq!(fitting_kernel_size(61, Shape::new(64, 64, 1).unwrap()), 61);
        let op = TaskSpec::new(TaskKind::MotionBlur, 0.05).build_op(s, &mut Rng::new(1)).unwrap();
        if let Variant::MotionBlur { kernel } = op.variant() {
            assert_eq!(kernel.height(), 31);
            assert!((kernel.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn split_is_disjoint_30_70() {
        let (t, e) = split_indices(20, 0.3);
        assert_eq!(t.len(), 6);
        assert_eq!(e.len(), 14);
        assert!(t.iter().all(|i| !e.contains(i)));
    }

    #[test]
    fn mix_seed_is_order_sensitive() {
        assert_ne!(mix_seed(1, 2), mix_seed(2, 1));
        assert_ne!(mix_seed(0, 0), 0);
    }
}
