//! Single-layer dense denoiser trained with the delta rule.
//!
//! Every output pixel is a weighted sum of all input pixels plus a bias
//! (a constant-1 input row), clamped to `[0, 1]`. Training is online LMS:
//! `dW[i][j] = eta * e[j] * x[i]` with `e = clean - y` taken on the linear
//! readout before the clamp.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::crossbar::{ProgramOptions, Sparsity, TiledMatrix};
use crate::device::DeviceModel;
use crate::image::{Dataset, ImageTensor};
use crate::rng::{domain, stream};
use crate::train::{rmse, TrainConfig, TrainLog};
use crate::{Denoiser, Error, Result};

/// Float master weights, row-major `(P + 1) x P` with the bias in the last row.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    height: usize,
    width: usize,
    weights: Vec<f64>,
}

impl DenseNet {
    pub fn zeros(height: usize, width: usize) -> Self {
        let p = height * width;
        Self {
            height,
            width,
            weights: vec![0.0; (p + 1) * p],
        }
    }

    pub fn identity(height: usize, width: usize) -> Self {
        let mut net = Self::zeros(height, width);
        let p = net.pixels();
        for i in 0..p {
            net.weights[i * p + i] = 1.0;
        }
        net
    }

    pub fn from_weights(height: usize, width: usize, weights: Vec<f64>) -> Result<Self> {
        let p = height * width;
        if weights.len() != (p + 1) * p {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{p} weights", p + 1),
                actual: format!("{}", weights.len()),
            });
        }
        Ok(Self {
            height,
            width,
            weights,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn check(&self, img: &ImageTensor) -> Result<()> {
        if img.height() != self.height || img.width() != self.width {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{} planes", self.height, self.width),
                actual: format!("{}", img.shape()),
            });
        }
        Ok(())
    }

    /// Linear readout `y = W^T [x; 1]` for one plane.
    pub fn linear(&self, x: &[f64], y: &mut [f64]) {
        let p = self.pixels();
        y.copy_from_slice(&self.weights[p * p..]);
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                axpy(y, xi, &self.weights[i * p..(i + 1) * p]);
            }
        }
    }

    /// Float inference (no devices).
    pub fn forward(&self, img: &ImageTensor) -> Result<ImageTensor> {
        self.check(img)?;
        img.map_planes(|plane| {
            let mut y = vec![0.0; self.pixels()];
            self.linear(plane.data(), &mut y);
            clamp_plane(plane, y)
        })
    }

    /// Program onto crossbars. The programming stream is derived from `seed`.
    pub fn deploy(&self, dev: &DeviceModel, opts: ProgramOptions, seed: u64) -> Result<DenseDenoiser> {
        let p = self.pixels();
        let crossbar = TiledMatrix::program_scaled(
            &self.weights,
            p + 1,
            p,
            dev,
            opts,
            &mut stream(seed, domain::PROGRAM, 0),
        )?;
        Ok(DenseDenoiser {
            height: self.height,
            width: self.width,
            crossbar,
        })
    }
}

impl Denoiser for DenseNet {
    fn denoise(&self, noisy: &ImageTensor) -> Result<ImageTensor> {
        self.forward(noisy)
    }
}

/// A dense denoiser as deployed: weights held on differential tiles.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseDenoiser {
    height: usize,
    width: usize,
    crossbar: TiledMatrix,
}

impl DenseDenoiser {
    pub fn from_crossbar(height: usize, width: usize, crossbar: TiledMatrix) -> Result<Self> {
        let p = height * width;
        if crossbar.rows() != p + 1 || crossbar.cols() != p {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{p} crossbar", p + 1),
                actual: format!("{}x{}", crossbar.rows(), crossbar.cols()),
            });
        }
        Ok(Self {
            height,
            width,
            crossbar,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn crossbar(&self) -> &TiledMatrix {
        &self.crossbar
    }

    /// `clamp(gain * matvec(W, [x; 1]))`, plane by plane.
    pub fn forward(&self, img: &ImageTensor) -> Result<ImageTensor> {
        if img.height() != self.height || img.width() != self.width {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{} planes", self.height, self.width),
                actual: format!("{}", img.shape()),
            });
        }
        img.map_planes(|plane| {
            let mut x = Vec::with_capacity(plane.data().len() + 1);
            x.extend_from_slice(plane.data());
            x.push(1.0);
            let y = self.crossbar.matvec_signed(&x)?;
            clamp_plane(plane, y)
        })
    }

    /// Disconnect input pixels and/or device pairs. The bias row is never
    /// dropped.
    pub fn with_sparsity(&self, dropout: f64, prune: f64, seed: u64) -> Result<Self> {
        let s = Sparsity {
            dropout,
            prune,
            droppable_rows: Some(self.height * self.width),
            compensate: true,
        };
        Ok(Self {
            crossbar: self
                .crossbar
                .apply_sparsity(&s, &mut stream(seed, domain::SPARSITY, 0))?,
            ..self.clone()
        })
    }

    /// Weights as realised by the devices (gain applied, masks honoured).
    pub fn to_net(&self) -> DenseNet {
        DenseNet {
            height: self.height,
            width: self.width,
            weights: self.crossbar.effective_weights(),
        }
    }
}

impl Denoiser for DenseDenoiser {
    fn denoise(&self, noisy: &ImageTensor) -> Result<ImageTensor> {
        self.forward(noisy)
    }
}

/// Outcome of a training run.
#[derive(Debug, Clone)]
pub struct Trained<N> {
    pub net: N,
    pub log: TrainLog,
}

/// Delta-rule training from a zero start. Noisy inputs are generated on the
/// fly from `cfg.train_noise`, fresh every epoch.
pub fn train(cfg: &TrainConfig, data: &Dataset) -> Result<Trained<DenseNet>> {
    let shape = data
        .shape()
        .ok_or_else(|| Error::InvalidDataset("empty training set".into()))?;
    train_from(cfg, data, DenseNet::zeros(shape.height, shape.width))
}

/// Delta-rule training continuing from `net`.
pub fn train_from(cfg: &TrainConfig, data: &Dataset, mut net: DenseNet) -> Result<Trained<DenseNet>> {
    cfg.validate()?;
    let shape = data
        .shape()
        .ok_or_else(|| Error::InvalidDataset("empty training set".into()))?;
    if shape.height != net.height || shape.width != net.width {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{} planes", net.height, net.width),
            actual: format!("{shape}"),
        });
    }
    let p = net.pixels();
    let mut log = TrainLog::default();
    let mut y = vec![0.0; p];
    let mut e = vec![0.0; p];
    let mut x = vec![0.0; p + 1];
    let mut pending = if cfg.batch > 1 { vec![0.0; net.weights.len()] } else { Vec::new() };
    for epoch in 0..cfg.epochs {
        let eta = cfg.rate(epoch);
        let mut sq = 0.0;
        let mut count = 0;
        let mut in_batch = 0;
        for (k, &idx) in cfg.epoch_order(data.len(), epoch).iter().enumerate() {
            let clean = &data.images()[idx];
            let noisy = cfg.train_noise.corrupt_indexed(clean, cfg.seed, cfg.noise_index(epoch, k));
            for (plane_c, plane_n) in clean.planes().iter().zip(noisy.planes()) {
                x[..p].copy_from_slice(plane_n.data());
                x[p] = 1.0;
                net.linear(&x[..p], &mut y);
                for ((ej, &t), &yj) in e.iter_mut().zip(plane_c.data()).zip(&y) {
                    *ej = t - yj;
                    sq += *ej * *ej;
                }
                count += p;
                if eta == 0.0 {
                    continue;
                }
                let target = if cfg.batch > 1 { &mut pending } else { &mut net.weights };
                let scale = eta / cfg.batch as f64;
                for (i, &xi) in x.iter().enumerate() {
                    if xi != 0.0 {
                        axpy(&mut target[i * p..(i + 1) * p], scale * xi, &e);
                    }
                }
            }
            in_batch += 1;
            if cfg.batch > 1 && in_batch == cfg.batch {
                flush(&mut net.weights, &mut pending);
                in_batch = 0;
            }
        }
        if cfg.batch > 1 && in_batch > 0 {
            flush(&mut net.weights, &mut pending);
        }
        log.push(rmse(sq, count))?;
        if cfg.device_in_loop {
            let deployed = net.deploy(&cfg.device, cfg.program, crate::rng::child_seed(cfg.seed, epoch as u64))?;
            net.weights = deployed.crossbar.effective_weights();
        }
    }
    Ok(Trained { net, log })
}

fn flush(w: &mut [f64], pending: &mut [f64]) {
    for (a, b) in w.iter_mut().zip(pending.iter_mut()) {
        *a += *b;
        *b = 0.0;
    }
}

#[inline]
pub(crate) fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn clamp_plane(plane: &ImageTensor, y: Vec<f64>) -> Result<ImageTensor> {
    ImageTensor::new(plane.shape(), y.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{Shape, Split};
    use crate::metrics::mse;
    use crate::noise::NoiseSpec;
    use rand::Rng;

    fn tiny_dataset(n: usize, seed: u64) -> Dataset {
        let mut rng = stream(seed, 50, 0);
        let imgs = (0..n)
            .map(|_| ImageTensor::from_fn(4, 4, |_, _| if rng.random::<f64>() < 0.4 { 1.0 } else { 0.0 }))
            .collect();
        Dataset::new(imgs, vec![0; n], Split::Train).unwrap()
    }

    #[test]
    fn identity_net_is_identity() {
        let img = ImageTensor::from_fn(5, 6, |r, c| ((r * 6 + c) % 11) as f64 / 10.0);
        let net = DenseNet::identity(5, 6);
        assert_eq!(net.forward(&img).unwrap(), img);
        let dep = net
            .deploy(&DeviceModel::ideal(), ProgramOptions::default(), 0)
            .unwrap();
        let out = dep.forward(&img).unwrap();
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ideal_deployment_matches_float_inference() {
        let data = tiny_dataset(30, 1);
        let mut cfg = TrainConfig::dense(NoiseSpec::gaussian(0.05), 2);
        cfg.learning_rate = 0.05;
        let net = train(&cfg, &data).unwrap().net;
        let dep = net.deploy(&DeviceModel::ideal(), ProgramOptions::default(), 9).unwrap();
        for img in data.images() {
            let noisy = NoiseSpec::gaussian(0.05).corrupt_indexed(img, 3, 0);
            let a = net.forward(&noisy).unwrap();
            let b = dep.forward(&noisy).unwrap();
            for (p, q) in a.data().iter().zip(b.data()) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_rate_keeps_weights() {
        let data = tiny_dataset(10, 2);
        let mut cfg = TrainConfig::dense(NoiseSpec::gaussian(0.1), 0);
        cfg.learning_rate = 0.0;
        let start = DenseNet::identity(4, 4);
        let out = train_from(&cfg, &data, start.clone()).unwrap();
        assert_eq!(out.net, start);
    }

    #[test]
    fn single_pair_converges() {
        // One clean/noisy pair, no fresh noise: LMS drives the error to zero.
        let img = ImageTensor::from_fn(4, 4, |r, c| ((r + 2 * c) % 5) as f64 / 4.0);
        let data = Dataset::new(vec![img.clone()], vec![0], Split::Train).unwrap();
        let mut cfg = TrainConfig::dense(NoiseSpec::salt_pepper(0.0), 0);
        cfg.learning_rate = 0.02;
        cfg.decay = crate::train::Decay::Constant;
        cfg.epochs = 60;
        let t = train(&cfg, &data).unwrap();
        let out = t.net.forward(&img).unwrap();
        assert!(mse(&out, &img).unwrap() < 1e-3);
        // scalar oracle: per-pixel error contracts by (1 - eta * |x|^2) each step
        let norm2 = img.data().iter().map(|v| v * v).sum::<f64>() + 1.0;
        let factor = (1.0 - cfg.learning_rate * norm2).abs();
        let want = img.data().iter().map(|v| v * v).sum::<f64>().sqrt() / 4.0 * factor.powi(59);
        assert!((t.log.epoch_rmse[59] / want - 1.0).abs() < 1e-6);
    }

    #[test]
    fn training_is_reproducible() {
        let data = tiny_dataset(20, 3);
        let cfg = TrainConfig::dense(NoiseSpec::salt_pepper(0.1), 4);
        let a = train(&cfg, &data).unwrap();
        let b = train(&cfg, &data).unwrap();
        assert_eq!(a.net, b.net);
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn divergent_rate_is_reported() {
        let data = tiny_dataset(50, 4);
        let mut cfg = TrainConfig::dense(NoiseSpec::gaussian(0.5), 0);
        cfg.learning_rate = 5.0;
        cfg.epochs = 5;
        assert!(matches!(train(&cfg, &data), Err(Error::Divergence { .. })));
    }

    #[test]
    fn minibatch_averages_updates() {
        let data = tiny_dataset(8, 5);
        let mut cfg = TrainConfig::dense(NoiseSpec::salt_pepper(0.0), 0);
        cfg.learning_rate = 0.1;
        cfg.batch = 8;
        cfg.epochs = 1;
        cfg.samples_per_epoch = None;
        let t = train(&cfg, &data).unwrap();
        // one batch from zero weights: W = eta/8 * sum x t^T
        let p = 16;
        for i in 0..=p {
            for j in 0..p {
                let want: f64 = data
                    .images()
                    .iter()
                    .map(|im| {
                        let xi = if i == p { 1.0 } else { im.data()[i] };
                        xi * im.data()[j]
                    })
                    .sum::<f64>()
                    * 0.1
                    / 8.0;
                assert!((t.net.weights()[i * p + j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sparsity_keeps_bias_and_counts() {
        let net = DenseNet::identity(28, 28);
        let dep = net.deploy(&DeviceModel::ideal(), ProgramOptions::default(), 0).unwrap();
        let s = dep.with_sparsity(0.2, 0.0, 1).unwrap();
        assert_eq!(s.crossbar().dropped_rows(), 157);
        assert!(!s.crossbar().dropout_mask()[784]);
    }

    #[test]
    fn rejects_wrong_plane_size() {
        let net = DenseNet::zeros(4, 4);
        assert!(net.forward(&ImageTensor::zeros(Shape::gray(5, 4))).is_err());
    }
}
