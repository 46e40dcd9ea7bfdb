//! Shared training configuration, schedules and the divergence guard.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::crossbar::ProgramOptions;
use crate::device::DeviceModel;
use crate::noise::NoiseSpec;
use crate::rng::{domain, stream};
use crate::{Error, Result};

/// Learning-rate schedule across epochs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decay {
    /// `eta / sqrt(epoch)`, epochs counted from 1.
    #[default]
    InvSqrt,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub decay: Decay,
    pub epochs: usize,
    /// Samples drawn per epoch (`None`: the whole dataset).
    pub samples_per_epoch: Option<usize>,
    /// Mini-batch size; 1 is online training.
    pub batch: usize,
    pub seed: u64,
    pub train_noise: NoiseSpec,
    /// Share of clean (uncorrupted) inputs; used by the fusion trainer.
    pub clean_fraction: f64,
    /// Device model the trained weights are programmed onto.
    pub device: DeviceModel,
    /// Re-program the master weights through the device after every epoch.
    pub device_in_loop: bool,
    pub program: ProgramOptions,
}

impl TrainConfig {
    /// Defaults for the single-layer delta-rule denoiser.
    pub fn dense(train_noise: NoiseSpec, seed: u64) -> Self {
        Self {
            learning_rate: 0.001,
            decay: Decay::InvSqrt,
            epochs: 3,
            samples_per_epoch: Some(20_000),
            batch: 1,
            seed,
            train_noise,
            clean_fraction: 0.0,
            device: DeviceModel::ideal(),
            device_in_loop: false,
            program: ProgramOptions::default(),
        }
    }

    /// Defaults for the convolutional denoiser (plain SGD).
    pub fn cnn(train_noise: NoiseSpec, seed: u64) -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 3,
            samples_per_epoch: Some(20_000),
            ..Self::dense(train_noise, seed)
        }
    }

    /// Defaults for the fusion kernel.
    pub fn fusion(seed: u64) -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 2,
            samples_per_epoch: Some(4_000),
            clean_fraction: 0.5,
            ..Self::dense(NoiseSpec::gaussian(0.1), seed)
        }
    }

    /// Defaults for the downstream MLP classifier (trained on clean data).
    pub fn classifier(seed: u64) -> Self {
        Self {
            learning_rate: 0.1,
            decay: Decay::Constant,
            epochs: 3,
            samples_per_epoch: None,
            batch: 32,
            ..Self::dense(NoiseSpec::gaussian(0.0), seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidParameter("learning rate must be finite and >= 0".into()));
        }
        if self.batch == 0 {
            return Err(Error::InvalidParameter("batch must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.clean_fraction) {
            return Err(Error::InvalidParameter("clean fraction outside [0, 1]".into()));
        }
        self.train_noise.validate()?;
        self.device.validate()
    }

    /// Rate used during `epoch` (counted from 0).
    pub fn rate(&self, epoch: usize) -> f64 {
        match self.decay {
            Decay::InvSqrt => self.learning_rate / libm::sqrt((epoch + 1) as f64),
            Decay::Constant => self.learning_rate,
        }
    }

    /// Sample indices for one epoch: a seeded permutation of `0..n`,
    /// truncated to `samples_per_epoch`.
    pub fn epoch_order(&self, n: usize, epoch: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut stream(self.seed, domain::SHUFFLE, epoch as u64));
        if let Some(k) = self.samples_per_epoch {
            order.truncate(k.min(n));
        }
        order
    }

    /// Noise stream index for sample `i` of `epoch`; fresh noise each epoch.
    pub fn noise_index(&self, epoch: usize, sample: usize) -> u64 {
        ((epoch as u64) << 32) | sample as u64
    }
}

/// Per-epoch training loss.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epoch_rmse: Vec<f64>,
}

impl TrainLog {
    /// Record an epoch; fails if the loss is non-finite or more than twice
    /// the first epoch's loss.
    pub fn push(&mut self, rmse: f64) -> Result<()> {
        let epoch = self.epoch_rmse.len();
        self.epoch_rmse.push(rmse);
        let initial = self.epoch_rmse[0];
        if !rmse.is_finite() || rmse > 2.0 * initial {
            return Err(Error::Divergence {
                epoch,
                rmse,
                initial,
            });
        }
        Ok(())
    }

    /// Whether the last `k` recorded losses are non-increasing.
    pub fn tail_non_increasing(&self, k: usize) -> bool {
        let n = self.epoch_rmse.len();
        let tail = &self.epoch_rmse[n.saturating_sub(k)..];
        tail.windows(2).all(|w| w[1] <= w[0])
    }
}

/// Root mean square of accumulated squared error.
pub(crate) fn rmse(sq_sum: f64, count: usize) -> f64 {
    if count == 0 {
        0.0
    } else {
        libm::sqrt(sq_sum / count as f64)
    }
}
