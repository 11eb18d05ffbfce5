//! Frequency-spatial complementary inpainting network (FSCN).
//!
//! A CPU-only implementation built on its own tensor and reverse-mode
//! differentiation engine:
//!
//! * [`tensor`]: dense tensors, the recording tape, Adam.
//! * [`nn`]: convolution layers over a parameter store.
//! * [`gradcheck`]: finite-difference checks for every op, block and loss.
//! * [`spectral`]: 2-D DFT, log-real spectra, frequency loss.
//! * [`maskgen`]: seeded irregular hole masks with thin/medium/thick presets.
//! * [`blocks`]: residual blocks and the frequency-spatial cross-attention block.
//! * [`model`]: generator (UNet + frequency branch) and PatchGAN discriminator.
//! * [`losses`]: the five training terms and their weighted total.
//! * [`metrics`]: SSIM, PSNR, log-spectral distance.
//! * [`io`]: PPM/PGM images, datasets, checkpoints.
//! * [`train`], [`config`], [`commands`]: the training loop and CLI plumbing.
//! * [`ablation`]: full model vs. variants without the frequency loss or branch.

pub mod ablation;
pub mod blocks;
pub mod commands;
pub mod config;
pub mod error;
pub mod gradcheck;
pub mod io;
pub mod losses;
pub mod maskgen;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod spectral;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Graph, ParamStore, Real, Tensor, Var};
