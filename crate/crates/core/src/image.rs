//! Image tensors and labelled datasets.
//!
//! Pixels are stored interleaved in `(row, col, channel)` order as `f64`
//! intensities. Values are nominally in `[0, 1]`; unclipped noise models may
//! push them outside, and [`ImageTensor::clamped`] restores the range.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Height, width and channel count of an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    pub const fn gray(height: usize, width: usize) -> Self {
        Self::new(height, width, 1)
    }

    pub const fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Pixels in one channel plane.
    pub const fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub const fn plane(&self) -> Shape {
        Shape::gray(self.height, self.width)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageTensor {
    data: Vec<f64>,
    shape: Shape,
}

impl ImageTensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if shape.channels != 1 && shape.channels != 3 {
            return Err(Error::InvalidImage(format!(
                "unsupported channel count {}",
                shape.channels
            )));
        }
        if data.len() != shape.len() {
            return Err(Error::InvalidImage(format!(
                "{} values for shape {shape}",
                data.len()
            )));
        }
        Ok(Self { data, shape })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self {
            data: vec![0.0; shape.len()],
            shape,
        }
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        Self {
            data: vec![value; shape.len()],
            shape,
        }
    }

    /// Grayscale image from a row-major closure.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            data,
            shape: Shape::gray(height, width),
        }
    }

    /// Build from raw bytes scaled by `1/255`.
    pub fn from_bytes(shape: Shape, bytes: &[u8]) -> Result<Self> {
        Self::new(shape, bytes.iter().map(|&b| f64::from(b) / 255.0).collect())
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[(row * self.shape.width + col) * self.shape.channels + channel]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: f64) {
        let idx = (row * self.shape.width + col) * self.shape.channels + channel;
        self.data[idx] = value;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            shape: self.shape,
        }
    }

    pub fn clamped(&self) -> Self {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Extract one channel as a grayscale plane.
    pub fn plane(&self, channel: usize) -> ImageTensor {
        let ch = self.shape.channels;
        if ch == 1 {
            return self.clone();
        }
        Self {
            data: self.data.iter().skip(channel).step_by(ch).copied().collect(),
            shape: self.shape.plane(),
        }
    }

    pub fn planes(&self) -> Vec<ImageTensor> {
        (0..self.shape.channels).map(|c| self.plane(c)).collect()
    }

    /// Interleave grayscale planes back into one image.
    pub fn from_planes(planes: &[ImageTensor]) -> Result<Self> {
        let first = planes
            .first()
            .ok_or_else(|| Error::InvalidImage("no planes".into()))?;
        let ps = first.shape;
        if ps.channels != 1 || planes.iter().any(|p| p.shape != ps) {
            return Err(Error::InvalidImage("planes must be equal-sized grayscale".into()));
        }
        if planes.len() == 1 {
            return Ok(first.clone());
        }
        let shape = Shape::new(ps.height, ps.width, planes.len());
        let mut data = Vec::with_capacity(shape.len());
        for i in 0..ps.plane_len() {
            for p in planes {
                data.push(p.data[i]);
            }
        }
        Self::new(shape, data)
    }

    /// Apply a plane-to-plane operation to every channel independently.
    pub fn map_planes<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(&ImageTensor) -> Result<ImageTensor>,
    {
        if self.shape.channels == 1 {
            return f(self);
        }
        let planes = self
            .planes()
            .iter()
            .map(&mut f)
            .collect::<Result<Vec<_>>>()?;
        Self::from_planes(&planes)
    }

    pub fn ensure_same_shape(&self, other: &ImageTensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                expected: format!("{}", self.shape),
                actual: format!("{}", other.shape),
            });
        }
        Ok(())
    }
}

/// Which half of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl core::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(Error::Parse {
                what: "split",
                input: s.into(),
            }),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// Equal-length images and class labels (0..=9) sharing one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Vec<ImageTensor>,
    labels: Vec<u8>,
    split: Split,
}

impl Dataset {
    pub fn new(images: Vec<ImageTensor>, labels: Vec<u8>, split: Split) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::InvalidDataset(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(first) = images.first() {
            if let Some(bad) = images.iter().position(|im| im.shape() != first.shape()) {
                return Err(Error::InvalidDataset(format!(
                    "image {bad} has shape {} but image 0 has {}",
                    images[bad].shape(),
                    first.shape()
                )));
            }
        }
        if let Some(bad) = labels.iter().position(|&l| l > 9) {
            return Err(Error::InvalidDataset(format!(
                "label {} at index {bad} outside 0..=9",
                labels[bad]
            )));
        }
        Ok(Self {
            images,
            labels,
            split,
        })
    }

    pub fn images(&self) -> &[ImageTensor] {
        &self.images
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn shape(&self) -> Option<Shape> {
        self.images.first().map(ImageTensor::shape)
    }

    /// First `n` samples (or all of them).
    pub fn take(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            images: self.images[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
            split: self.split,
        }
    }

    pub fn with_labels(&self, labels: Vec<u8>) -> Result<Dataset> {
        Dataset::new(self.images.clone(), labels, self.split)
    }
}
