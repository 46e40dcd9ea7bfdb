//! MNIST (IDX) and CIFAR-10 (binary batch) loaders.
//!
//! Raw bytes are scaled by 1/255. Gzip-compressed files are detected by
//! their magic bytes, so `foo` and `foo.gz` are both accepted.

use std::fmt;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use flate2::read::GzDecoder;
use memdenoise_core::{Dataset, ImageTensor, Shape, Split};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const CIFAR_RECORD: usize = 1 + 3 * 32 * 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    #[default]
    Mnist,
    Cifar10,
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Cifar10 => "cifar10",
        })
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mnist" => Ok(DatasetKind::Mnist),
            "cifar10" | "cifar-10" | "cifar" => Ok(DatasetKind::Cifar10),
            _ => Err(Error::Config(format!("unknown dataset {s:?} (mnist, cifar10)"))),
        }
    }
}

/// Read a file, inflating it if it starts with the gzip magic.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(Error::io(path))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(Error::io(path))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// `base` if it exists, else `base.gz`.
fn locate(dir: &Path, base: &str) -> Result<PathBuf> {
    let plain = dir.join(base);
    if plain.is_file() {
        return Ok(plain);
    }
    let gz = dir.join(format!("{base}.gz"));
    if gz.is_file() {
        return Ok(gz);
    }
    Err(Error::Io {
        path: plain,
        source: std::io::Error::new(std::io::ErrorKind::NotFound, "file not found (also tried .gz)"),
    })
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Truncated {
            path: path.into(),
            expected: at + 4,
            found: bytes.len(),
        })
}

/// Parse an IDX image file (`0x00000803`, big-endian count, rows, cols).
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<Vec<ImageTensor>> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::BadMagic {
            path: path.into(),
            found: magic,
            expected: IDX_IMAGES_MAGIC,
        });
    }
    let n = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    let plane = rows * cols;
    let expected = 16 + n * plane;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            path: path.into(),
            expected,
            found: bytes.len(),
        });
    }
    bytes[16..expected]
        .chunks_exact(plane.max(1))
        .take(n)
        .map(|px| Ok(ImageTensor::from_bytes(Shape::gray(rows, cols), px)?))
        .collect()
}

/// Parse an IDX label file (`0x00000801`, big-endian count).
pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::BadMagic {
            path: path.into(),
            found: magic,
            expected: IDX_LABELS_MAGIC,
        });
    }
    let n = be_u32(bytes, 4, path)? as usize;
    let expected = 8 + n;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            path: path.into(),
            expected,
            found: bytes.len(),
        });
    }
    Ok(bytes[8..expected].to_vec())
}

fn mnist_stem(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Test => "t10k",
    }
}

/// Paths of the two IDX files for `split` (plain or `.gz`).
pub fn mnist_files(dir: &Path, split: Split) -> Result<(PathBuf, PathBuf)> {
    let stem = mnist_stem(split);
    Ok((
        locate(dir, &format!("{stem}-images-idx3-ubyte"))?,
        locate(dir, &format!("{stem}-labels-idx1-ubyte"))?,
    ))
}

pub fn load_mnist(dir: &Path, split: Split) -> Result<Dataset> {
    let (img_path, lbl_path) = mnist_files(dir, split)?;
    let images = parse_idx_images(&read_maybe_gz(&img_path)?, &img_path)?;
    let labels = parse_idx_labels(&read_maybe_gz(&lbl_path)?, &lbl_path)?;
    if images.len() != labels.len() {
        return Err(Error::CountMismatch {
            images: images.len(),
            labels: labels.len(),
        });
    }
    Ok(Dataset::new(images, labels, split)?)
}

/// Parse CIFAR-10 binary records: one label byte then 1024 R, 1024 G and
/// 1024 B bytes. Pixels are reordered to interleaved `(h, w, c)`.
pub fn parse_cifar(bytes: &[u8], path: &Path) -> Result<(Vec<ImageTensor>, Vec<u8>)> {
    if !bytes.len().is_multiple_of(CIFAR_RECORD) {
        return Err(Error::RecordLength {
            path: path.into(),
            len: bytes.len(),
            record: CIFAR_RECORD,
        });
    }
    let mut images = Vec::with_capacity(bytes.len() / CIFAR_RECORD);
    let mut labels = Vec::with_capacity(images.capacity());
    for rec in bytes.chunks_exact(CIFAR_RECORD) {
        labels.push(rec[0]);
        let planar = &rec[1..];
        let mut hwc = Vec::with_capacity(3 * 1024);
        for i in 0..1024 {
            for c in 0..3 {
                hwc.push(planar[c * 1024 + i]);
            }
        }
        images.push(ImageTensor::from_bytes(Shape::new(32, 32, 3), &hwc)?);
    }
    Ok((images, labels))
}

pub fn cifar_files(dir: &Path, split: Split) -> Result<Vec<PathBuf>> {
    let dir = if dir.join("cifar-10-batches-bin").is_dir() {
        dir.join("cifar-10-batches-bin")
    } else {
        dir.to_path_buf()
    };
    match split {
        Split::Train => (1..=5).map(|i| locate(&dir, &format!("data_batch_{i}.bin"))).collect(),
        Split::Test => Ok(vec![locate(&dir, "test_batch.bin")?]),
    }
}

pub fn load_cifar10(dir: &Path, split: Split) -> Result<Dataset> {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for path in cifar_files(dir, split)? {
        let (im, lb) = parse_cifar(&read_maybe_gz(&path)?, &path)?;
        images.extend(im);
        labels.extend(lb);
    }
    Ok(Dataset::new(images, labels, split)?)
}

pub fn load(kind: DatasetKind, dir: &Path, split: Split) -> Result<Dataset> {
    match kind {
        DatasetKind::Mnist => load_mnist(dir, split),
        DatasetKind::Cifar10 => load_cifar10(dir, split),
    }
}

/// Check that the files for `split` exist without reading them.
pub fn check_files(kind: DatasetKind, dir: &Path, split: Split) -> Result<()> {
    match kind {
        DatasetKind::Mnist => mnist_files(dir, split).map(|_| ()),
        DatasetKind::Cifar10 => cifar_files(dir, split).map(|_| ()),
    }
}

/// Dataset directory under a data root: `<root>/mnist`, `<root>/cifar10`
/// (or `cifar-10-batches-bin`), falling back to the root itself.
pub fn dataset_dir(root: &Path, kind: DatasetKind) -> PathBuf {
    let candidates: &[&str] = match kind {
        DatasetKind::Mnist => &["mnist", "MNIST"],
        DatasetKind::Cifar10 => &["cifar10", "cifar-10", "cifar-10-batches-bin"],
    };
    candidates
        .iter()
        .map(|c| root.join(c))
        .find(|p| p.is_dir())
        .unwrap_or_else(|| root.to_path_buf())
}
