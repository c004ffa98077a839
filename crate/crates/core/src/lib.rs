//! Noise-matched iterative MAP denoising ("ProxiMAP") and plug-and-play
//! inverse-problem solvers, verified against exact Gaussian-mixture priors.
//!
//! Module map:
//! - [`grid`]: fields, seeded sampling, radix-2 DFTs, circular convolution
//! - [`gmm`]: closed-form mixture prior (density, score, MMSE, MAP oracle)
//! - [`schedule`]: σ/γ recursions, β solving, fixed-point analysis
//! - [`proximap`]: the iterative denoiser, the naive MAP iteration and denoiser handles
//! - [`degradations`]: forward operators, data fidelities and their proxes
//! - [`solvers`]: DPIR, DiffPIR, DAPS and conditional samplers
//! - [`metrics`]: PSNR and SSIM
//! - [`bench`]: synthetic worlds, tuning, file formats, experiments

pub mod bench;
pub mod degradations;
pub mod error;
pub mod gmm;
pub mod grid;
pub mod metrics;
pub mod proximap;
pub mod schedule;
pub mod solvers;

pub use error::{Error, Result};
