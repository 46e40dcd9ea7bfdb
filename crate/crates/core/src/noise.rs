//! Sensor noise models.
//!
//! Text forms: `gaussian:VAR[:clip]`, `sp:DENSITY`, `poisson[:PEAK]`,
//! `speckle[:VAR][:clip]`. Gaussian and speckle corruption is left unclipped
//! unless `:clip` is given, so the noisy-image MSE equals the variance.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::image::ImageTensor;
use crate::rng::{domain, stream};
use crate::{Error, Result};

pub const DEFAULT_POISSON_PEAK: f64 = 3.0;
pub const DEFAULT_SPECKLE_VARIANCE: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseSpec {
    Gaussian { variance: f64, clip: bool },
    SaltPepper { density: f64 },
    Poisson { peak: f64 },
    Speckle { variance: f64, clip: bool },
}

impl NoiseSpec {
    pub const fn gaussian(variance: f64) -> Self {
        NoiseSpec::Gaussian {
            variance,
            clip: false,
        }
    }

    pub const fn salt_pepper(density: f64) -> Self {
        NoiseSpec::SaltPepper { density }
    }

    pub const fn poisson() -> Self {
        NoiseSpec::Poisson {
            peak: DEFAULT_POISSON_PEAK,
        }
    }

    pub const fn speckle() -> Self {
        NoiseSpec::Speckle {
            variance: DEFAULT_SPECKLE_VARIANCE,
            clip: false,
        }
    }

    /// The eight corruptions the per-noise denoisers are trained for.
    pub fn standard_set() -> [NoiseSpec; 8] {
        [
            Self::gaussian(0.01),
            Self::gaussian(0.1),
            Self::gaussian(0.5),
            Self::salt_pepper(0.1),
            Self::salt_pepper(0.25),
            Self::salt_pepper(0.5),
            Self::poisson(),
            Self::speckle(),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            NoiseSpec::Gaussian { variance, .. } | NoiseSpec::Speckle { variance, .. } => {
                variance >= 0.0 && variance.is_finite()
            }
            NoiseSpec::SaltPepper { density } => (0.0..=1.0).contains(&density),
            NoiseSpec::Poisson { peak } => peak >= 1.0 && peak.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid noise parameters: {self}")))
        }
    }

    /// Short label safe for file names, e.g. `gaussian-0.1`.
    pub fn slug(&self) -> String {
        format!("{self}").replace(':', "-")
    }

    /// Corrupt image `index` of a dataset under a master seed.
    pub fn corrupt_indexed(&self, img: &ImageTensor, seed: u64, index: u64) -> ImageTensor {
        corrupt(img, self, &mut stream(seed, domain::CORRUPT, index))
    }
}

impl fmt::Display for NoiseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            NoiseSpec::Gaussian { variance, clip } => {
                write!(f, "gaussian:{variance}")?;
                if clip {
                    f.write_str(":clip")?;
                }
                Ok(())
            }
            NoiseSpec::SaltPepper { density } => write!(f, "sp:{density}"),
            NoiseSpec::Poisson { peak } => write!(f, "poisson:{peak}"),
            NoiseSpec::Speckle { variance, clip } => {
                write!(f, "speckle:{variance}")?;
                if clip {
                    f.write_str(":clip")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for NoiseSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse {
            what: "noise spec",
            input: s.into(),
        };
        let mut parts = s.trim().split(':');
        let kind = parts.next().ok_or_else(bad)?.to_ascii_lowercase();
        let rest: Vec<&str> = parts.collect();
        let num = |t: &str| t.parse::<f64>().map_err(|_| bad());
        let clip_flag = |t: Option<&&str>| match t {
            None => Ok(false),
            Some(&"clip") => Ok(true),
            Some(_) => Err(bad()),
        };
        let spec = match (kind.as_str(), rest.as_slice()) {
            ("gaussian" | "gauss" | "g", [v, tail @ ..]) if tail.len() <= 1 => NoiseSpec::Gaussian {
                variance: num(v)?,
                clip: clip_flag(tail.first())?,
            },
            ("sp" | "saltpepper" | "salt-pepper", [d]) => NoiseSpec::SaltPepper { density: num(d)? },
            ("poisson", []) => Self::poisson(),
            ("poisson", [p]) => NoiseSpec::Poisson { peak: num(p)? },
            ("speckle", []) => Self::speckle(),
            ("speckle", ["clip"]) => NoiseSpec::Speckle {
                variance: DEFAULT_SPECKLE_VARIANCE,
                clip: true,
            },
            ("speckle", [v, tail @ ..]) if tail.len() <= 1 => NoiseSpec::Speckle {
                variance: num(v)?,
                clip: clip_flag(tail.first())?,
            },
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Apply one corruption. The stream is consumed in pixel order.
pub fn corrupt<R: Rng + ?Sized>(img: &ImageTensor, spec: &NoiseSpec, rng: &mut R) -> ImageTensor {
    let mut out = img.clone();
    let data = out.data_mut();
    match *spec {
        NoiseSpec::Gaussian { variance, clip } => {
            if variance > 0.0 {
                let n = Normal::new(0.0, libm::sqrt(variance)).expect("finite variance");
                for v in data.iter_mut() {
                    *v += n.sample(rng);
                }
            }
            if clip {
                clamp_all(data);
            }
        }
        NoiseSpec::SaltPepper { density } => {
            let count = (libm::round(density * data.len() as f64) as usize).min(data.len());
            for k in index::sample(rng, data.len(), count) {
                data[k] = if rng.random::<bool>() { 1.0 } else { 0.0 };
            }
        }
        NoiseSpec::Poisson { peak } => {
            for v in data.iter_mut() {
                let lambda = v.clamp(0.0, 1.0) * peak;
                let k = if lambda > 0.0 {
                    Poisson::new(lambda).expect("positive rate").sample(rng)
                } else {
                    0.0
                };
                *v = (k / peak).clamp(0.0, 1.0);
            }
        }
        NoiseSpec::Speckle { variance, clip } => {
            if variance > 0.0 {
                let n = Normal::new(0.0, libm::sqrt(variance)).expect("finite variance");
                for v in data.iter_mut() {
                    *v += *v * n.sample(rng);
                }
            }
            if clip {
                clamp_all(data);
            }
        }
    }
    out
}

fn clamp_all(data: &mut [f64]) {
    for v in data {
        *v = v.clamp(0.0, 1.0);
    }
}
