//! Host-side companion of `memdenoise-core`: dataset loaders, image dumps,
//! checkpoints, experiment configuration, report writers, data-parallel
//! drivers and the `memdenoise` command line.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod drivers;
mod error;
pub mod pnm;
pub mod report;

pub use error::{Error, Result};
pub use memdenoise_core as core;
