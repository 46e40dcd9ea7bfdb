//! Convolution by patch unfolding (im2col).
//!
//! A `k x k` convolution over `C` input maps becomes a matrix product: each
//! output position contributes one row of `C*k*k` patch values (plus a
//! constant 1 for the bias), and each kernel is one column. The same column
//! layout is what gets programmed onto a crossbar, so the float and the
//! crossbar paths share one weight matrix.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::crossbar::{ProgramOptions, TiledMatrix};
use crate::device::DeviceModel;
use crate::image::ImageTensor;
use crate::{Error, Result};

/// Channel-major stack of equally sized planes.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMaps {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMaps {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::ShapeMismatch {
                expected: format!("{channels}x{height}x{width}"),
                actual: format!("{} values", data.len()),
            });
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    /// Single map from a grayscale image.
    pub fn from_image(img: &ImageTensor) -> Result<Self> {
        if img.channels() != 1 {
            return Err(Error::InvalidImage("feature maps need a grayscale plane".into()));
        }
        Self::new(1, img.height(), img.width(), img.data().to_vec())
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn at(&self, c: usize, r: usize, col: usize) -> f64 {
        self.data[(c * self.height + r) * self.width + col]
    }
}

/// Unfold `k x k` patches (zero "same" padding) into a row-major
/// `(height*width) x (channels*k*k + 1)` matrix; the last column is 1.
pub fn im2col(input: &FeatureMaps, k: usize) -> Vec<f64> {
    let (c, h, w) = (input.channels, input.height, input.width);
    let half = (k / 2) as isize;
    let stride = c * k * k + 1;
    let mut out = vec![0.0; h * w * stride];
    for r in 0..h {
        for col in 0..w {
            let row = &mut out[(r * w + col) * stride..(r * w + col + 1) * stride];
            let mut idx = 0;
            for ch in 0..c {
                for dy in 0..k {
                    let y = r as isize + dy as isize - half;
                    for dx in 0..k {
                        let x = col as isize + dx as isize - half;
                        if y >= 0 && y < h as isize && x >= 0 && x < w as isize {
                            row[idx] = input.at(ch, y as usize, x as usize);
                        }
                        idx += 1;
                    }
                }
            }
            row[idx] = 1.0;
        }
    }
    out
}

/// Adjoint of [`im2col`]: scatter-add patch gradients (bias column
/// ignored) back onto the input maps.
pub fn col2im(cols: &[f64], channels: usize, height: usize, width: usize, k: usize) -> FeatureMaps {
    let half = (k / 2) as isize;
    let stride = channels * k * k + 1;
    let mut out = FeatureMaps::zeros(channels, height, width);
    for r in 0..height {
        for col in 0..width {
            let row = &cols[(r * width + col) * stride..(r * width + col + 1) * stride];
            let mut idx = 0;
            for ch in 0..channels {
                for dy in 0..k {
                    let y = r as isize + dy as isize - half;
                    for dx in 0..k {
                        let x = col as isize + dx as isize - half;
                        if y >= 0 && y < height as isize && x >= 0 && x < width as isize {
                            out.data[(ch * height + y as usize) * width + x as usize] += row[idx];
                        }
                        idx += 1;
                    }
                }
            }
        }
    }
    out
}

/// `k x k` convolution, `in_channels -> out_channels`, stride 1, same size.
///
/// `weights` is row-major `(in_channels*k*k + 1) x out_channels`; the last
/// row holds the biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub k: usize,
    pub weights: Vec<f64>,
}

impl ConvLayer {
    pub fn zeros(in_channels: usize, out_channels: usize, k: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            k,
            weights: vec![0.0; (in_channels * k * k + 1) * out_channels],
        }
    }

    /// Uniform `[-b, b]` init with `b = 1/sqrt(fan_in)`, zero bias.
    pub fn random<R: Rng + ?Sized>(in_channels: usize, out_channels: usize, k: usize, rng: &mut R) -> Self {
        let mut layer = Self::zeros(in_channels, out_channels, k);
        let fan_in = in_channels * k * k;
        let b = 1.0 / libm::sqrt(fan_in as f64);
        for v in &mut layer.weights[..fan_in * out_channels] {
            *v = rng.random_range(-b..b);
        }
        layer
    }

    pub fn rows(&self) -> usize {
        self.in_channels * self.k * self.k + 1
    }

    /// Kernel tap `(out, in, dy, dx)`.
    pub fn tap(&self, out: usize, input: usize, dy: usize, dx: usize) -> f64 {
        let row = (input * self.k + dy) * self.k + dx;
        self.weights[row * self.out_channels + out]
    }

    pub fn set_tap(&mut self, out: usize, input: usize, dy: usize, dx: usize, v: f64) {
        let row = (input * self.k + dy) * self.k + dx;
        self.weights[row * self.out_channels + out] = v;
    }

    pub fn bias(&self, out: usize) -> f64 {
        self.weights[(self.rows() - 1) * self.out_channels + out]
    }

    pub fn set_bias(&mut self, out: usize, v: f64) {
        let r = self.rows() - 1;
        self.weights[r * self.out_channels + out] = v;
    }

    fn check(&self, input: &FeatureMaps) -> Result<()> {
        if input.channels != self.in_channels {
            return Err(Error::ShapeMismatch {
                expected: format!("{} input channels", self.in_channels),
                actual: format!("{}", input.channels),
            });
        }
        Ok(())
    }

    /// Float forward pass via the unfolded product. Returns the output and
    /// the unfolded input (kept for backprop).
    pub fn forward_cols(&self, input: &FeatureMaps) -> Result<(FeatureMaps, Vec<f64>)> {
        self.check(input)?;
        let cols = im2col(input, self.k);
        let (n, stride, oc) = (input.plane_len(), self.rows(), self.out_channels);
        let mut out = FeatureMaps::zeros(oc, input.height, input.width);
        let mut acc = vec![0.0; oc];
        for p in 0..n {
            acc.fill(0.0);
            for (i, &x) in cols[p * stride..(p + 1) * stride].iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                for (a, &w) in acc.iter_mut().zip(&self.weights[i * oc..(i + 1) * oc]) {
                    *a += x * w;
                }
            }
            for (o, &a) in acc.iter().enumerate() {
                out.data[o * n + p] = a;
            }
        }
        Ok((out, cols))
    }

    pub fn forward(&self, input: &FeatureMaps) -> Result<FeatureMaps> {
        self.forward_cols(input).map(|(o, _)| o)
    }

    /// Given `d_out` and the unfolded input from the forward pass, return
    /// `(d_weights, d_input)`.
    pub fn backward(&self, cols: &[f64], d_out: &FeatureMaps) -> (Vec<f64>, FeatureMaps) {
        let (n, stride, oc) = (d_out.plane_len(), self.rows(), self.out_channels);
        let mut d_w = vec![0.0; self.weights.len()];
        let mut d_cols = vec![0.0; n * stride];
        let mut g = vec![0.0; oc];
        for p in 0..n {
            for (o, gv) in g.iter_mut().enumerate() {
                *gv = d_out.data[o * n + p];
            }
            let patch = &cols[p * stride..(p + 1) * stride];
            let d_patch = &mut d_cols[p * stride..(p + 1) * stride];
            for i in 0..stride {
                let wrow = &self.weights[i * oc..(i + 1) * oc];
                let dwrow = &mut d_w[i * oc..(i + 1) * oc];
                let x = patch[i];
                let mut s = 0.0;
                for o in 0..oc {
                    dwrow[o] += x * g[o];
                    s += wrow[o] * g[o];
                }
                d_patch[i] = s;
            }
        }
        let d_in = col2im(&d_cols, self.in_channels, d_out.height, d_out.width, self.k);
        (d_w, d_in)
    }

    pub fn program<R: Rng + ?Sized>(
        &self,
        dev: &DeviceModel,
        opts: ProgramOptions,
        rng: &mut R,
    ) -> Result<CrossbarConv> {
        let matrix = TiledMatrix::program_scaled(&self.weights, self.rows(), self.out_channels, dev, opts, rng)?;
        Ok(CrossbarConv {
            in_channels: self.in_channels,
            out_channels: self.out_channels,
            k: self.k,
            matrix,
        })
    }
}

/// A convolution whose kernels live on a crossbar. Every output position
/// is one read of the crossbar with the unfolded patch as input.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossbarConv {
    pub in_channels: usize,
    pub out_channels: usize,
    pub k: usize,
    pub matrix: TiledMatrix,
}

impl CrossbarConv {
    pub fn forward(&self, input: &FeatureMaps) -> Result<FeatureMaps> {
        if input.channels != self.in_channels {
            return Err(Error::ShapeMismatch {
                expected: format!("{} input channels", self.in_channels),
                actual: format!("{}", input.channels),
            });
        }
        let cols = im2col(input, self.k);
        let stride = self.in_channels * self.k * self.k + 1;
        let n = input.plane_len();
        let mut out = FeatureMaps::zeros(self.out_channels, input.height, input.width);
        for p in 0..n {
            let y = self.matrix.matvec_signed(&cols[p * stride..(p + 1) * stride])?;
            for (o, v) in y.into_iter().enumerate() {
                out.data[o * n + p] = v;
            }
        }
        Ok(out)
    }
}
