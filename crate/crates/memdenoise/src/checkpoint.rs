//! Network checkpoints.
//!
//! Layout: `MDCK`, u16 format version, u32 header length, JSON header, then
//! one section per weight matrix in header order. A section is the master
//! weights (u64 byte length + f64 LE) followed by the same matrix as
//! programmed onto the header's device (u64 byte length + crossbar
//! container). All integers little-endian. Nothing time-dependent is
//! stored, so equal inputs give byte-identical files.

use std::fs;
use std::path::Path;

use memdenoise_core::cnn::{CnnDenoiser, CnnNet, CnnShape};
use memdenoise_core::conv::ConvLayer;
use memdenoise_core::crossbar::{ProgramOptions, TiledMatrix};
use memdenoise_core::dense::{DenseDenoiser, DenseNet};
use memdenoise_core::device::DeviceModel;
use memdenoise_core::fusion::FusionDenoiser;
use memdenoise_core::noise::NoiseSpec;
use memdenoise_core::rng::{child_seed, domain, stream};
use memdenoise_core::train::TrainConfig;
use memdenoise_core::{Denoiser, ImageTensor};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MDCK";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "network", rename_all = "lowercase")]
pub enum Architecture {
    Dense { height: usize, width: usize },
    Cnn { shape: CnnShape },
    Fusion { height: usize, width: usize, members: Vec<NoiseSpec>, k: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Dense(DenseNet),
    Cnn(CnnNet),
    Fusion { members: Vec<(NoiseSpec, DenseNet)>, kernel: ConvLayer },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format: u16,
    pub architecture: Architecture,
    pub seed: u64,
    pub device: DeviceModel,
    pub program: ProgramOptions,
    pub train: Option<TrainConfig>,
    pub epoch_rmse: Vec<f64>,
    pub sections: Vec<SectionInfo>,
}

/// Trained weights plus the context they were produced in.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub seed: u64,
    pub device: DeviceModel,
    pub program: ProgramOptions,
    pub train: Option<TrainConfig>,
    pub epoch_rmse: Vec<f64>,
}

/// A model programmed onto crossbars.
#[derive(Debug, Clone)]
pub enum Deployed {
    Dense(DenseDenoiser),
    Cnn(CnnDenoiser),
    Fusion(FusionDenoiser),
}

impl Denoiser for Deployed {
    fn denoise(&self, noisy: &ImageTensor) -> memdenoise_core::Result<ImageTensor> {
        match self {
            Deployed::Dense(d) => d.forward(noisy),
            Deployed::Cnn(d) => d.forward(noisy),
            Deployed::Fusion(d) => d.forward(noisy),
        }
    }
}

impl Model {
    pub fn architecture(&self) -> Architecture {
        match self {
            Model::Dense(n) => Architecture::Dense {
                height: n.height(),
                width: n.width(),
            },
            Model::Cnn(n) => Architecture::Cnn { shape: n.shape() },
            Model::Fusion { members, kernel } => Architecture::Fusion {
                height: members.first().map_or(0, |m| m.1.height()),
                width: members.first().map_or(0, |m| m.1.width()),
                members: members.iter().map(|m| m.0).collect(),
                k: kernel.k,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Model::Dense(_) => "dense",
            Model::Cnn(_) => "cnn",
            Model::Fusion { .. } => "fusion",
        }
    }

    /// Weight matrices in section order: `(name, rows, cols, weights)`.
    fn matrices(&self) -> Vec<(String, usize, usize, &[f64])> {
        fn conv<'a>(name: &str, l: &'a ConvLayer) -> (String, usize, usize, &'a [f64]) {
            (name.to_string(), l.rows(), l.out_channels, l.weights.as_slice())
        }
        fn dense(name: String, n: &DenseNet) -> (String, usize, usize, &[f64]) {
            (name, n.pixels() + 1, n.pixels(), n.weights())
        }
        match self {
            Model::Dense(n) => vec![dense("dense".into(), n)],
            Model::Cnn(n) => vec![
                conv("conv1", &n.conv1),
                conv("conv3d", &n.conv3d),
                conv("conv2", &n.conv2),
            ],
            Model::Fusion { members, kernel } => {
                let mut v: Vec<_> = members
                    .iter()
                    .enumerate()
                    .map(|(i, (_, n))| dense(format!("member{i}"), n))
                    .collect();
                v.push(conv("fusion", kernel));
                v
            }
        }
    }

    /// Program onto crossbars. Fusion members get independent programming
    /// streams derived from `seed`.
    pub fn deploy(&self, dev: &DeviceModel, opts: ProgramOptions, seed: u64) -> Result<Deployed> {
        Ok(match self {
            Model::Dense(n) => Deployed::Dense(n.deploy(dev, opts, seed)?),
            Model::Cnn(n) => Deployed::Cnn(n.deploy(dev, opts, seed)?),
            Model::Fusion { members, kernel } => {
                let deployed = members
                    .iter()
                    .enumerate()
                    .map(|(i, (_, n))| n.deploy(dev, opts, child_seed(seed, i as u64 + 1)))
                    .collect::<memdenoise_core::Result<Vec<_>>>()?;
                Deployed::Fusion(FusionDenoiser::new(deployed, kernel.clone(), dev, opts, seed)?)
            }
        })
    }

    /// Crossbars in section order, as `deploy` would program them.
    fn programmed(&self, dev: &DeviceModel, opts: ProgramOptions, seed: u64) -> Result<Vec<TiledMatrix>> {
        Ok(match self.deploy(dev, opts, seed)? {
            Deployed::Dense(d) => vec![d.crossbar().clone()],
            Deployed::Cnn(d) => vec![d.conv1.matrix, d.conv3d.matrix, d.conv2.matrix],
            Deployed::Fusion(f) => {
                let mut v: Vec<_> = f.members().iter().map(|m| m.crossbar().clone()).collect();
                let Model::Fusion { kernel, .. } = self else { unreachable!() };
                v.push(kernel.program(dev, opts, &mut stream(seed, domain::PROGRAM, 2))?.matrix);
                v
            }
        })
    }
}

fn push_blob(out: &mut Vec<u8>, blob: &[u8]) {
    out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
    out.extend_from_slice(blob);
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(Error::Truncated {
            path: self.path.into(),
            expected: self.at.saturating_add(n),
            found: self.bytes.len(),
        })?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<usize> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")) as usize)
    }

    fn blob(&mut self) -> Result<&'a [u8]> {
        let n = self.u64()?;
        self.take(n)
    }
}

impl Checkpoint {
    pub fn new(model: Model, seed: u64) -> Self {
        Self {
            model,
            seed,
            device: DeviceModel::ideal(),
            program: ProgramOptions::default(),
            train: None,
            epoch_rmse: Vec::new(),
        }
    }

    pub fn deploy(&self) -> Result<Deployed> {
        self.model.deploy(&self.device, self.program, self.seed)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let matrices = self.model.matrices();
        let header = Header {
            format: VERSION,
            architecture: self.model.architecture(),
            seed: self.seed,
            device: self.device,
            program: self.program,
            train: self.train,
            epoch_rmse: self.epoch_rmse.clone(),
            sections: matrices
                .iter()
                .map(|(name, rows, cols, _)| SectionInfo {
                    name: name.clone(),
                    rows: *rows,
                    cols: *cols,
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        let programmed = self.model.programmed(&self.device, self.program, self.seed)?;
        for ((_, _, _, w), xbar) in matrices.iter().zip(&programmed) {
            let raw: Vec<u8> = w.iter().flat_map(|v| v.to_le_bytes()).collect();
            push_blob(&mut out, &raw);
            push_blob(&mut out, &xbar.to_bytes());
        }
        Ok(out)
    }

    /// Parse a checkpoint; also returns the stored programmed crossbars.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<(Self, Vec<TiledMatrix>)> {
        let mut cur = Cursor { bytes, at: 0, path };
        if cur.take(4)? != MAGIC {
            return Err(Error::format(path, "not a checkpoint (bad magic)"));
        }
        let version = u16::from_le_bytes(cur.take(2)?.try_into().expect("2 bytes"));
        if version != VERSION {
            return Err(Error::format(path, format!("unsupported checkpoint version {version}")));
        }
        let hlen = u32::from_le_bytes(cur.take(4)?.try_into().expect("4 bytes")) as usize;
        let header: Header = serde_json::from_slice(cur.take(hlen)?)?;
        let mut weights = Vec::new();
        let mut crossbars = Vec::new();
        for s in &header.sections {
            let raw = cur.blob()?;
            if raw.len() != s.rows * s.cols * 8 {
                return Err(Error::format(
                    path,
                    format!("section {} holds {} bytes, expected {}x{} f64", s.name, raw.len(), s.rows, s.cols),
                ));
            }
            weights.push(
                raw.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect::<Vec<_>>(),
            );
            let xbar = TiledMatrix::from_bytes(cur.blob()?)?;
            if (xbar.rows(), xbar.cols()) != (s.rows, s.cols) {
                return Err(Error::format(path, format!("crossbar of section {} has the wrong size", s.name)));
            }
            crossbars.push(xbar);
        }
        if cur.at != bytes.len() {
            return Err(Error::format(path, "trailing bytes after the last section"));
        }
        let model = rebuild(&header, weights, path)?;
        Ok((
            Self {
                model,
                seed: header.seed,
                device: header.device,
                program: header.program,
                train: header.train,
                epoch_rmse: header.epoch_rmse,
            },
            crossbars,
        ))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(Error::io(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(Error::io(path))?;
        Ok(Self::from_bytes(&bytes, path)?.0)
    }
}

fn rebuild(header: &Header, mut weights: Vec<Vec<f64>>, path: &Path) -> Result<Model> {
    let conv = |inputs: usize, outputs: usize, k: usize, w: Vec<f64>| -> Result<ConvLayer> {
        let layer = ConvLayer {
            in_channels: inputs,
            out_channels: outputs,
            k,
            weights: w,
        };
        if layer.weights.len() != layer.rows() * outputs {
            return Err(Error::format(path, "convolution section does not match the architecture"));
        }
        Ok(layer)
    };
    let expect = |n: usize| -> Result<()> {
        if header.sections.len() != n {
            return Err(Error::format(path, format!("expected {n} sections, found {}", header.sections.len())));
        }
        Ok(())
    };
    Ok(match &header.architecture {
        Architecture::Dense { height, width } => {
            expect(1)?;
            Model::Dense(DenseNet::from_weights(*height, *width, weights.remove(0))?)
        }
        Architecture::Cnn { shape } => {
            expect(3)?;
            let mut it = weights.into_iter();
            let mut next = || it.next().expect("three sections");
            Model::Cnn(CnnNet {
                conv1: conv(1, shape.kernels, shape.k, next())?,
                conv3d: conv(shape.kernels, 1, shape.k, next())?,
                conv2: conv(1, 1, shape.k, next())?,
            })
        }
        Architecture::Fusion {
            height,
            width,
            members,
            k,
        } => {
            expect(members.len() + 1)?;
            let kernel = conv(members.len(), 1, *k, weights.pop().expect("fusion section"))?;
            let members = members
                .iter()
                .zip(weights)
                .map(|(spec, w)| Ok((*spec, DenseNet::from_weights(*height, *width, w)?)))
                .collect::<Result<Vec<_>>>()?;
            Model::Fusion { members, kernel }
        }
    })
}
