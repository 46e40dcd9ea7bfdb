//! Numerical core of an adaptive memristive-crossbar image denoiser.
//!
//! Everything here is pure computation over in-memory buffers and builds
//! without `std` (only `alloc` is required). File formats, the command line
//! and data-parallel drivers live in the `memdenoise` crate.
//!
//! Module map:
//!
//! * [`image`] - image tensors and labelled datasets
//! * [`device`] - behavioural memristor model (levels, programming variation)
//! * [`crossbar`] - differential weight mapping onto 256x64 tiles
//! * [`noise`] - Gaussian, salt & pepper, Poisson and speckle corruption
//! * [`metrics`] - SSIM / MSE / PSNR scoring
//! * [`dense`], [`cnn`], [`fusion`] - the three denoising networks and trainers
//! * [`baselines`] - Gaussian blur, median and total-variation filters
//! * [`hwcost`] - analytical energy / area / latency estimator
//! * [`classify`] - downstream MLP classifier harness

#![cfg_attr(not(test), no_std)]
#![warn(missing_debug_implementations)]
// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod baselines;
pub mod classify;
pub mod cnn;
pub mod conv;
pub mod crossbar;
pub mod dense;
pub mod device;
mod error;
pub mod fusion;
pub mod hwcost;
pub mod image;
pub mod metrics;
pub mod noise;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
pub use image::{Dataset, ImageTensor, Shape, Split};

/// Anything that maps a noisy image to a cleaned one of the same shape.
pub trait Denoiser {
    fn denoise(&self, noisy: &ImageTensor) -> Result<ImageTensor>;
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn denoise(&self, noisy: &ImageTensor) -> Result<ImageTensor> {
        (**self).denoise(noisy)
    }
}
