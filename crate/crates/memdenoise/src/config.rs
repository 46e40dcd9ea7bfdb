//! Experiment configuration: a TOML document whose fields can each be
//! overridden from the command line.
//!
//! ```toml
//! seed = 7
//! dataset = "mnist"
//! data_dir = "data"
//! network = "dense"
//! noise = ["gaussian:0.01", "sp:0.1"]
//! limit = 1000
//! out_dir = "out"
//!
//! [device]
//! levels = "ideal"   # or a level count such as 64
//! sigma = 0.0
//!
//! [sparsity]
//! dropout = 0.0
//! prune = 0.0
//!
//! [train]
//! epochs = 3
//! samples = 20000
//! learning_rate = 0.001
//! batch = 1
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use memdenoise_core::device::{DeviceModel, Levels};
use memdenoise_core::noise::NoiseSpec;
use memdenoise_core::train::TrainConfig;
use memdenoise_core::Split;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{self, DatasetKind};
use crate::{Error, Result};

pub const DATA_ENV: &str = "MEMDENOISE_DATA";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Network {
    #[default]
    Dense,
    Cnn,
    Fusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceSection {
    pub levels: String,
    pub sigma: f64,
}

impl Default for DeviceSection {
    fn default() -> Self {
        Self {
            levels: "ideal".into(),
            sigma: 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SparsitySection {
    pub dropout: f64,
    pub prune: f64,
}

/// Overrides of the per-network training defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub samples: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch: Option<usize>,
    /// Use only the first N training images.
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub dataset: DatasetKind,
    pub data_dir: Option<PathBuf>,
    pub network: Network,
    pub noise: Vec<String>,
    pub device: DeviceSection,
    pub sparsity: SparsitySection,
    pub train: TrainSection,
    /// Test images scored per noise.
    pub limit: Option<usize>,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: None,
            dataset: DatasetKind::Mnist,
            data_dir: None,
            network: Network::Dense,
            noise: Vec::new(),
            device: DeviceSection::default(),
            sparsity: SparsitySection::default(),
            train: TrainSection::default(),
            limit: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path)
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("a seed is required (--seed or `seed = ...`)".into()))
    }

    pub fn noise_specs(&self) -> Result<Vec<NoiseSpec>> {
        if self.noise.is_empty() {
            return Ok(NoiseSpec::standard_set().to_vec());
        }
        self.noise.iter().map(|s| Ok(s.parse::<NoiseSpec>()?)).collect()
    }

    pub fn device_model(&self) -> Result<DeviceModel> {
        let levels: Levels = self.device.levels.parse()?;
        Ok(DeviceModel::new(levels, self.device.sigma)?)
    }

    /// Root holding the datasets: config, then `$MEMDENOISE_DATA`, then `data`.
    pub fn data_root(&self) -> PathBuf {
        self.data_dir
            .clone()
            .or_else(|| std::env::var_os(DATA_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("data"))
    }

    pub fn dataset_dir(&self) -> PathBuf {
        data::dataset_dir(&self.data_root(), self.dataset)
    }

    /// Training defaults for `network` with this config's overrides.
    pub fn train_config(&self, network: Network, noise: NoiseSpec) -> Result<TrainConfig> {
        let seed = self.seed()?;
        let mut cfg = match network {
            Network::Dense => TrainConfig::dense(noise, seed),
            Network::Cnn => TrainConfig::cnn(noise, seed),
            Network::Fusion => TrainConfig::fusion(seed),
        };
        let t = &self.train;
        if let Some(v) = t.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = t.samples {
            cfg.samples_per_epoch = Some(v);
        }
        if let Some(v) = t.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = t.batch {
            cfg.batch = v;
        }
        cfg.device = self.device_model()?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Everything checkable before any compute starts.
    pub fn validate(&self, needs: &[Split]) -> Result<()> {
        self.seed()?;
        self.noise_specs()?;
        self.device_model()?;
        for (name, v) in [("dropout", self.sparsity.dropout), ("prune", self.sparsity.prune)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} fraction {v} outside [0, 1)")));
            }
        }
        if self.limit == Some(0) {
            return Err(Error::Config("limit must be at least 1".into()));
        }
        let dir = self.dataset_dir();
        for &split in needs {
            data::check_files(self.dataset, &dir, split).map_err(|e| {
                Error::Config(format!("{} {split} data not found under {}: {e}", self.dataset, dir.display()))
            })?;
        }
        Ok(())
    }

    /// Short stable digest of the effective configuration plus `context`
    /// (the subcommand and anything it adds).
    pub fn hash(&self, context: &str) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        let digest = Sha256::new()
            .chain_update(context.as_bytes())
            .chain_update([0])
            .chain_update(json.as_bytes())
            .finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_example() {
        let text = r#"
            seed = 7
            dataset = "mnist"
            network = "dense"
            noise = ["gaussian:0.01", "sp:0.1"]
            limit = 1000
            [device]
            levels = "64"
            sigma = 0.01
            [train]
            epochs = 2
        "#;
        let cfg = ExperimentConfig::from_toml(text, Path::new("c.toml")).unwrap();
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.noise_specs().unwrap().len(), 2);
        assert_eq!(cfg.device_model().unwrap().levels, Levels::Finite(64));
        let t = cfg.train_config(Network::Dense, NoiseSpec::gaussian(0.01)).unwrap();
        assert_eq!(t.epochs, 2);
        assert_eq!(t.samples_per_epoch, Some(20_000));
    }

    #[test]
    fn unknown_keys_and_missing_seed_are_errors() {
        assert!(ExperimentConfig::from_toml("sed = 1", Path::new("c")).is_err());
        let cfg = ExperimentConfig::default();
        assert!(matches!(cfg.validate(&[]), Err(Error::Config(_))));
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig {
            seed: Some(1),
            ..Default::default()
        };
        let b = ExperimentConfig {
            seed: Some(2),
            ..Default::default()
        };
        assert_eq!(a.hash("eval"), a.clone().hash("eval"));
        assert_ne!(a.hash("eval"), b.hash("eval"));
        assert_ne!(a.hash("eval"), a.hash("sweep"));
        assert_eq!(a.hash("eval").len(), 16);
    }
}
