//! Convolutional denoiser.
//!
//! `conv kxk (1 -> K) -> ReLU -> maxpool 2x2 -> conv kxk (K -> 1) -> ReLU ->
//! conv kxk (1 -> 1) -> nearest upsample x2 -> clamp`. The middle layer is a
//! 3D kernel spanning all K feature maps and collapsing them to one plane.
//! Trained by backpropagation on the squared error of the linear output
//! (before the clamp).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::conv::{ConvLayer, CrossbarConv, FeatureMaps};
use crate::crossbar::ProgramOptions;
use crate::dense::Trained;
use crate::device::DeviceModel;
use crate::image::{Dataset, ImageTensor};
use crate::rng::{domain, stream};
use crate::train::{rmse, TrainConfig, TrainLog};
use crate::{Denoiser, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnnShape {
    pub kernels: usize,
    pub k: usize,
}

impl Default for CnnShape {
    fn default() -> Self {
        Self { kernels: 8, k: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnNet {
    pub conv1: ConvLayer,
    pub conv3d: ConvLayer,
    pub conv2: ConvLayer,
}

/// Gradients, laid out like the layer weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnGrads {
    pub conv1: Vec<f64>,
    pub conv3d: Vec<f64>,
    pub conv2: Vec<f64>,
}

struct Cache {
    cols1: Vec<f64>,
    z1: FeatureMaps,
    argmax: Vec<usize>,
    cols2: Vec<f64>,
    z2: FeatureMaps,
    cols3: Vec<f64>,
    out: FeatureMaps,
}

impl CnnNet {
    pub fn new(shape: CnnShape, seed: u64) -> Self {
        let mut rng = stream(seed, domain::INIT, 0);
        Self {
            conv1: ConvLayer::random(1, shape.kernels, shape.k, &mut rng),
            conv3d: ConvLayer::random(shape.kernels, 1, shape.k, &mut rng),
            conv2: ConvLayer::random(1, 1, shape.k, &mut rng),
        }
    }

    pub fn zeros(shape: CnnShape) -> Self {
        Self {
            conv1: ConvLayer::zeros(1, shape.kernels, shape.k),
            conv3d: ConvLayer::zeros(shape.kernels, 1, shape.k),
            conv2: ConvLayer::zeros(1, 1, shape.k),
        }
    }

    pub fn shape(&self) -> CnnShape {
        CnnShape {
            kernels: self.conv1.out_channels,
            k: self.conv1.k,
        }
    }

    /// Trainable device pairs (weights and biases of all three layers).
    pub fn parameter_count(&self) -> usize {
        self.conv1.weights.len() + self.conv3d.weights.len() + self.conv2.weights.len()
    }

    fn run(&self, x: &FeatureMaps) -> Result<Cache> {
        let (z1, cols1) = self.conv1.forward_cols(x)?;
        let a1 = relu(&z1);
        let (pooled, argmax) = maxpool2(&a1);
        let (z2, cols2) = self.conv3d.forward_cols(&pooled)?;
        let a2 = relu(&z2);
        let (z3, cols3) = self.conv2.forward_cols(&a2)?;
        let out = upsample2(&z3);
        Ok(Cache {
            cols1,
            z1,
            argmax,
            cols2,
            z2,
            cols3,
            out,
        })
    }

    /// Linear (pre-clamp) output for an even-sized plane.
    pub fn linear(&self, x: &FeatureMaps) -> Result<FeatureMaps> {
        self.run(x).map(|c| c.out)
    }

    /// Loss `mean((y - target)^2)` on the linear output, and its gradients.
    pub fn loss_and_grads(&self, x: &FeatureMaps, target: &[f64]) -> Result<(f64, CnnGrads)> {
        let c = self.run(x)?;
        if target.len() != c.out.data.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} target pixels", c.out.data.len()),
                actual: format!("{}", target.len()),
            });
        }
        let n = target.len() as f64;
        let mut loss = 0.0;
        let mut d_out = FeatureMaps::zeros(1, c.out.height, c.out.width);
        for ((d, &y), &t) in d_out.data.iter_mut().zip(&c.out.data).zip(target) {
            let e = y - t;
            loss += e * e;
            *d = 2.0 * e / n;
        }
        let d_z3 = upsample2_backward(&d_out);
        let (g3, d_a2) = self.conv2.backward(&c.cols3, &d_z3);
        let d_z2 = relu_backward(&c.z2, &d_a2);
        let (g2, d_pool) = self.conv3d.backward(&c.cols2, &d_z2);
        let d_a1 = maxpool2_backward(&d_pool, &c.argmax, c.z1.height, c.z1.width);
        let d_z1 = relu_backward(&c.z1, &d_a1);
        let (g1, _) = self.conv1.backward(&c.cols1, &d_z1);
        Ok((
            loss / n,
            CnnGrads {
                conv1: g1,
                conv3d: g2,
                conv2: g3,
            },
        ))
    }

    pub fn forward(&self, img: &ImageTensor) -> Result<ImageTensor> {
        img.map_planes(|plane| run_plane(plane, |x| self.linear(x)))
    }

    pub fn deploy(&self, dev: &DeviceModel, opts: ProgramOptions, seed: u64) -> Result<CnnDenoiser> {
        let mut rng = stream(seed, domain::PROGRAM, 1);
        Ok(CnnDenoiser {
            conv1: self.conv1.program(dev, opts, &mut rng)?,
            conv3d: self.conv3d.program(dev, opts, &mut rng)?,
            conv2: self.conv2.program(dev, opts, &mut rng)?,
        })
    }

    fn step(&mut self, g: &CnnGrads, eta: f64) {
        for (w, d) in [
            (&mut self.conv1.weights, &g.conv1),
            (&mut self.conv3d.weights, &g.conv3d),
            (&mut self.conv2.weights, &g.conv2),
        ] {
            for (wi, di) in w.iter_mut().zip(d) {
                *wi -= eta * di;
            }
        }
    }
}

impl Denoiser for CnnNet {
    fn denoise(&self, noisy: &ImageTensor) -> Result<ImageTensor> {
        self.forward(noisy)
    }
}

/// The CNN with every kernel bank on a crossbar; each convolution is one
/// crossbar read per unfolded patch.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnDenoiser {
    pub conv1: CrossbarConv,
    pub conv3d: CrossbarConv,
    pub conv2: CrossbarConv,
}

impl CnnDenoiser {
    pub fn linear(&self, x: &FeatureMaps) -> Result<FeatureMaps> {
        let a1 = relu(&self.conv1.forward(x)?);
        let (pooled, _) = maxpool2(&a1);
        let a2 = relu(&self.conv3d.forward(&pooled)?);
        Ok(upsample2(&self.conv2.forward(&a2)?))
    }

    pub fn forward(&self, img: &ImageTensor) -> Result<ImageTensor> {
        img.map_planes(|plane| run_plane(plane, |x| self.linear(x)))
    }
}

impl Denoiser for CnnDenoiser {
    fn denoise(&self, noisy: &ImageTensor) -> Result<ImageTensor> {
        self.forward(noisy)
    }
}

/// Pad odd dimensions by reflection, run, crop, clamp.
fn run_plane(plane: &ImageTensor, f: impl Fn(&FeatureMaps) -> Result<FeatureMaps>) -> Result<ImageTensor> {
    let (h, w) = (plane.height(), plane.width());
    if h < 2 || w < 2 {
        return Err(Error::InvalidImage(format!("plane {h}x{w} too small to pool")));
    }
    let x = pad_even(plane)?;
    let y = f(&x)?;
    let mut out = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            out.push(y.at(0, r, c).clamp(0.0, 1.0));
        }
    }
    ImageTensor::new(plane.shape(), out)
}

fn pad_even(plane: &ImageTensor) -> Result<FeatureMaps> {
    let (h, w) = (plane.height(), plane.width());
    let (ph, pw) = (h + h % 2, w + w % 2);
    if ph == h && pw == w {
        return FeatureMaps::from_image(plane);
    }
    let mut data = Vec::with_capacity(ph * pw);
    for r in 0..ph {
        let sr = if r < h { r } else { h - 2 };
        for c in 0..pw {
            let sc = if c < w { c } else { w - 2 };
            data.push(plane.get(sr, sc, 0));
        }
    }
    FeatureMaps::new(1, ph, pw, data)
}

fn relu(x: &FeatureMaps) -> FeatureMaps {
    FeatureMaps {
        data: x.data.iter().map(|&v| v.max(0.0)).collect(),
        ..*x
    }
}

fn relu_backward(z: &FeatureMaps, d: &FeatureMaps) -> FeatureMaps {
    FeatureMaps {
        data: z
            .data
            .iter()
            .zip(&d.data)
            .map(|(&zv, &dv)| if zv > 0.0 { dv } else { 0.0 })
            .collect(),
        ..*d
    }
}

/// 2x2 max pooling; also returns the flat source index of each maximum
/// (first maximum on ties).
fn maxpool2(x: &FeatureMaps) -> (FeatureMaps, Vec<usize>) {
    let (h, w) = (x.height / 2, x.width / 2);
    let mut out = FeatureMaps::zeros(x.channels, h, w);
    let mut arg = vec![0; x.channels * h * w];
    for c in 0..x.channels {
        for r in 0..h {
            for col in 0..w {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = 0;
                for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let i = (c * x.height + 2 * r + dy) * x.width + 2 * col + dx;
                    if x.data[i] > best {
                        best = x.data[i];
                        best_i = i;
                    }
                }
                let o = (c * h + r) * w + col;
                out.data[o] = best;
                arg[o] = best_i;
            }
        }
    }
    (out, arg)
}

fn maxpool2_backward(d: &FeatureMaps, arg: &[usize], h: usize, w: usize) -> FeatureMaps {
    let mut out = FeatureMaps::zeros(d.channels, h, w);
    for (&g, &i) in d.data.iter().zip(arg) {
        out.data[i] += g;
    }
    out
}

fn upsample2(x: &FeatureMaps) -> FeatureMaps {
    let (h, w) = (x.height * 2, x.width * 2);
    let mut out = FeatureMaps::zeros(x.channels, h, w);
    for c in 0..x.channels {
        for r in 0..h {
            for col in 0..w {
                out.data[(c * h + r) * w + col] = x.at(c, r / 2, col / 2);
            }
        }
    }
    out
}

fn upsample2_backward(d: &FeatureMaps) -> FeatureMaps {
    let (h, w) = (d.height / 2, d.width / 2);
    let mut out = FeatureMaps::zeros(d.channels, h, w);
    for c in 0..d.channels {
        for r in 0..d.height {
            for col in 0..d.width {
                out.data[(c * h + r / 2) * w + col / 2] += d.at(c, r, col);
            }
        }
    }
    out
}

/// Stochastic gradient descent on per-plane squared error.
pub fn train(cfg: &TrainConfig, data: &Dataset, shape: CnnShape) -> Result<Trained<CnnNet>> {
    train_from(cfg, data, CnnNet::new(shape, cfg.seed))
}

pub fn train_from(cfg: &TrainConfig, data: &Dataset, mut net: CnnNet) -> Result<Trained<CnnNet>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidDataset("empty training set".into()));
    }
    let mut log = TrainLog::default();
    let mut acc: Option<CnnGrads> = None;
    for epoch in 0..cfg.epochs {
        let eta = cfg.rate(epoch);
        let mut sq = 0.0;
        let mut count = 0;
        let mut in_batch = 0;
        for (k, &idx) in cfg.epoch_order(data.len(), epoch).iter().enumerate() {
            let clean = &data.images()[idx];
            let noisy = cfg.train_noise.corrupt_indexed(clean, cfg.seed, cfg.noise_index(epoch, k));
            for (pc, pn) in clean.planes().iter().zip(noisy.planes()) {
                let x = pad_even(&pn)?;
                let t = pad_even(pc)?;
                let (loss, g) = net.loss_and_grads(&x, &t.data)?;
                sq += loss * t.data.len() as f64;
                count += t.data.len();
                match acc.as_mut() {
                    None => acc = Some(g),
                    Some(a) => {
                        for (dst, src) in [
                            (&mut a.conv1, &g.conv1),
                            (&mut a.conv3d, &g.conv3d),
                            (&mut a.conv2, &g.conv2),
                        ] {
                            for (p, q) in dst.iter_mut().zip(src) {
                                *p += q;
                            }
                        }
                    }
                }
            }
            in_batch += 1;
            if in_batch == cfg.batch {
                if let Some(g) = acc.take() {
                    net.step(&g, eta / cfg.batch as f64);
                }
                in_batch = 0;
            }
        }
        if let Some(g) = acc.take() {
            net.step(&g, eta / cfg.batch as f64);
        }
        log.push(rmse(sq, count))?;
        if cfg.device_in_loop {
            let dep = net.deploy(&cfg.device, cfg.program, crate::rng::child_seed(cfg.seed, epoch as u64))?;
            net.conv1.weights = dep.conv1.matrix.effective_weights();
            net.conv3d.weights = dep.conv3d.matrix.effective_weights();
            net.conv2.weights = dep.conv2.matrix.effective_weights();
        }
    }
    Ok(Trained { net, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{Shape, Split};
    use crate::noise::NoiseSpec;
    use rand::Rng;

    fn toy_net(seed: u64) -> CnnNet {
        let mut net = CnnNet::new(CnnShape::default(), seed);
        let mut rng = stream(seed, 90, 0);
        for o in 0..8 {
            net.conv1.set_bias(o, rng.random_range(0.0..0.3));
        }
        net.conv3d.set_bias(0, 0.2);
        net.conv2.set_bias(0, 0.1);
        net
    }

    fn toy_input(seed: u64) -> (FeatureMaps, Vec<f64>) {
        let mut rng = stream(seed, 91, 0);
        let x = FeatureMaps::new(1, 8, 8, (0..64).map(|_| rng.random()).collect()).unwrap();
        let t = (0..64).map(|_| rng.random()).collect();
        (x, t)
    }

    #[test]
    fn gradients_match_central_differences() {
        for seed in 0..3 {
            let net = toy_net(seed);
            let (x, t) = toy_input(seed);
            let (_, g) = net.loss_and_grads(&x, &t).unwrap();
            let h = 1e-5;
            let mut worst: f64 = 0.0;
            for layer in 0..3 {
                let n = [&net.conv1, &net.conv3d, &net.conv2][layer].weights.len();
                let analytic = [&g.conv1, &g.conv3d, &g.conv2][layer];
                for i in 0..n {
                    let eval = |delta: f64| {
                        let mut m = net.clone();
                        [&mut m.conv1, &mut m.conv3d, &mut m.conv2][layer].weights[i] += delta;
                        m.loss_and_grads(&x, &t).unwrap().0
                    };
                    let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                    let a = analytic[i];
                    let scale = a.abs().max(numeric.abs());
                    if scale > 1e-8 {
                        worst = worst.max((a - numeric).abs() / scale);
                    } else {
                        assert!((a - numeric).abs() < 1e-10);
                    }
                }
            }
            assert!(worst < 1e-4, "seed {seed}: worst relative error {worst}");
        }
    }

    #[test]
    fn zero_kernels_give_zero_image() {
        let net = CnnNet::zeros(CnnShape::default());
        let img = ImageTensor::from_fn(10, 12, |r, c| ((r + c) % 3) as f64 / 2.0);
        assert!(net.forward(&img).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_preserved_for_odd_sizes() {
        let net = toy_net(1);
        let img = ImageTensor::from_fn(9, 7, |r, c| ((r * c) % 4) as f64 / 3.0);
        let out = net.forward(&img).unwrap();
        assert_eq!(out.shape(), Shape::gray(9, 7));
        assert!(out.min() >= 0.0 && out.max() <= 1.0);
    }

    #[test]
    fn ideal_crossbar_matches_float() {
        let net = toy_net(2);
        let img = ImageTensor::from_fn(12, 12, |r, c| ((r * 5 + c * 3) % 7) as f64 / 6.0);
        let dep = net.deploy(&DeviceModel::ideal(), ProgramOptions::default(), 0).unwrap();
        let x = FeatureMaps::from_image(&img).unwrap();
        let a = net.linear(&x).unwrap();
        let b = dep.linear(&x).unwrap();
        for (p, q) in a.data.iter().zip(&b.data) {
            assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_rate_keeps_kernels() {
        let imgs = vec![ImageTensor::from_fn(8, 8, |r, c| ((r + c) % 2) as f64); 4];
        let data = Dataset::new(imgs, vec![0; 4], Split::Train).unwrap();
        let mut cfg = TrainConfig::cnn(NoiseSpec::gaussian(0.1), 5);
        cfg.learning_rate = 0.0;
        let start = CnnNet::new(CnnShape::default(), 5);
        let t = train_from(&cfg, &data, start.clone()).unwrap();
        assert_eq!(t.net, start);
    }

    #[test]
    fn training_reduces_loss() {
        let mut rng = stream(8, 92, 0);
        let imgs: Vec<_> = (0..64)
            .map(|_| {
                let r0 = rng.random_range(1..6);
                let c0 = rng.random_range(1..6);
                ImageTensor::from_fn(10, 10, |r, c| if (r0..r0 + 4).contains(&r) && (c0..c0 + 3).contains(&c) { 1.0 } else { 0.0 })
            })
            .collect();
        let data = Dataset::new(imgs, vec![0; 64], Split::Train).unwrap();
        let mut cfg = TrainConfig::cnn(NoiseSpec::gaussian(0.01), 1);
        cfg.epochs = 8;
        cfg.samples_per_epoch = None;
        cfg.learning_rate = 0.05;
        let t = train(&cfg, &data, CnnShape::default()).unwrap();
        let l = &t.log.epoch_rmse;
        assert!(l[l.len() - 1] < 0.8 * l[0], "{l:?}");
    }
}
