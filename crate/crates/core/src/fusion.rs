//! Fusion of per-noise denoisers.
//!
//! Each member is a dense denoiser trained for one corruption. Their outputs
//! are stacked as feature maps and merged by a single `M x k x k` kernel,
//! trained with the delta rule on a mix of clean and corrupted inputs while
//! the members stay frozen.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::conv::{ConvLayer, CrossbarConv, FeatureMaps};
use crate::crossbar::ProgramOptions;
use crate::dense::{DenseDenoiser, Trained};
use crate::device::DeviceModel;
use crate::image::{Dataset, ImageTensor};
use crate::noise::NoiseSpec;
use crate::rng::{domain, stream};
use crate::train::{rmse, TrainConfig, TrainLog};
use crate::{Denoiser, Error, Result};

pub const DEFAULT_FUSION_K: usize = 3;

/// Kernel that averages the members' centre pixels.
pub fn averaging_kernel(members: usize, k: usize) -> ConvLayer {
    let mut kernel = ConvLayer::zeros(members, 1, k);
    for m in 0..members {
        kernel.set_tap(0, m, k / 2, k / 2, 1.0 / members as f64);
    }
    kernel
}

#[derive(Debug, Clone)]
pub struct FusionDenoiser {
    members: Vec<DenseDenoiser>,
    kernel: ConvLayer,
    mapped: CrossbarConv,
}

impl FusionDenoiser {
    /// Assemble members and a fusion kernel, programming the kernel onto
    /// its own crossbar.
    pub fn new(
        members: Vec<DenseDenoiser>,
        kernel: ConvLayer,
        dev: &DeviceModel,
        opts: ProgramOptions,
        seed: u64,
    ) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::InvalidParameter("fusion needs at least one member".into()))?;
        if members
            .iter()
            .any(|m| m.height() != first.height() || m.width() != first.width())
        {
            return Err(Error::ShapeMismatch {
                expected: format!("members of {}x{}", first.height(), first.width()),
                actual: "mixed member sizes".into(),
            });
        }
        if kernel.in_channels != members.len() || kernel.out_channels != 1 {
            return Err(Error::ShapeMismatch {
                expected: format!("{} -> 1 fusion kernel", members.len()),
                actual: format!("{} -> {}", kernel.in_channels, kernel.out_channels),
            });
        }
        let mapped = kernel.program(dev, opts, &mut stream(seed, domain::PROGRAM, 2))?;
        Ok(Self {
            members,
            kernel,
            mapped,
        })
    }

    pub fn members(&self) -> &[DenseDenoiser] {
        &self.members
    }

    pub fn kernel(&self) -> &ConvLayer {
        &self.kernel
    }

    /// Member outputs for one plane, stacked channel-major.
    pub fn stack(&self, plane: &ImageTensor) -> Result<FeatureMaps> {
        stack_members(&self.members, plane)
    }

    pub fn forward(&self, img: &ImageTensor) -> Result<ImageTensor> {
        img.map_planes(|plane| {
            let y = self.mapped.forward(&self.stack(plane)?)?;
            ImageTensor::new(plane.shape(), y.data.iter().map(|v| v.clamp(0.0, 1.0)).collect())
        })
    }
}

impl Denoiser for FusionDenoiser {
    fn denoise(&self, noisy: &ImageTensor) -> Result<ImageTensor> {
        self.forward(noisy)
    }
}

fn stack_members(members: &[DenseDenoiser], plane: &ImageTensor) -> Result<FeatureMaps> {
    let (h, w) = (plane.height(), plane.width());
    let mut data = Vec::with_capacity(members.len() * h * w);
    for m in members {
        data.extend_from_slice(m.forward(plane)?.data());
    }
    FeatureMaps::new(members.len(), h, w, data)
}

/// Train only the fusion kernel. Inputs are clean with probability
/// `cfg.clean_fraction`, otherwise corrupted by one of `specs` chosen
/// uniformly.
pub fn train(
    cfg: &TrainConfig,
    members: &[DenseDenoiser],
    specs: &[NoiseSpec],
    data: &Dataset,
) -> Result<Trained<ConvLayer>> {
    train_from(cfg, members, specs, data, averaging_kernel(members.len(), DEFAULT_FUSION_K))
}

pub fn train_from(
    cfg: &TrainConfig,
    members: &[DenseDenoiser],
    specs: &[NoiseSpec],
    data: &Dataset,
    mut kernel: ConvLayer,
) -> Result<Trained<ConvLayer>> {
    cfg.validate()?;
    if specs.is_empty() {
        return Err(Error::InvalidParameter("fusion training needs noise specs".into()));
    }
    if data.is_empty() {
        return Err(Error::InvalidDataset("empty training set".into()));
    }
    if kernel.in_channels != members.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} member channels", members.len()),
            actual: format!("{}", kernel.in_channels),
        });
    }
    let mut log = TrainLog::default();
    let mut pending = alloc::vec![0.0; kernel.weights.len()];
    for epoch in 0..cfg.epochs {
        let eta = cfg.rate(epoch);
        let mut sq = 0.0;
        let mut count = 0;
        let mut in_batch = 0;
        for (k, &idx) in cfg.epoch_order(data.len(), epoch).iter().enumerate() {
            let clean = &data.images()[idx];
            let mut mix = stream(cfg.seed, domain::FUSION_MIX, cfg.noise_index(epoch, k));
            let input = if mix.random::<f64>() < cfg.clean_fraction {
                clean.clone()
            } else {
                let spec = specs[mix.random_range(0..specs.len())];
                spec.corrupt_indexed(clean, cfg.seed, cfg.noise_index(epoch, k))
            };
            for (pc, pn) in clean.planes().iter().zip(input.planes()) {
                let stacked = stack_members(members, &pn)?;
                let (y, cols) = kernel.forward_cols(&stacked)?;
                let n = y.data.len() as f64;
                let mut d = FeatureMaps::zeros(1, y.height, y.width);
                for ((dv, &yv), &t) in d.data.iter_mut().zip(&y.data).zip(pc.data()) {
                    let e = t - yv;
                    sq += e * e;
                    // descent direction of 0.5 * mean(e^2)
                    *dv = -e / n;
                }
                count += y.data.len();
                let (g, _) = kernel.backward(&cols, &d);
                for (p, gv) in pending.iter_mut().zip(g) {
                    *p += gv;
                }
            }
            in_batch += 1;
            if in_batch == cfg.batch {
                apply(&mut kernel.weights, &mut pending, eta / cfg.batch as f64);
                in_batch = 0;
            }
        }
        if in_batch > 0 {
            apply(&mut kernel.weights, &mut pending, eta / cfg.batch as f64);
        }
        log.push(rmse(sq, count))?;
    }
    Ok(Trained { net: kernel, log })
}

fn apply(w: &mut [f64], g: &mut [f64], eta: f64) {
    for (wi, gi) in w.iter_mut().zip(g.iter_mut()) {
        *wi -= eta * *gi;
        *gi = 0.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::DenseNet;
    use crate::image::Split;
    use crate::metrics::mse;
    use crate::train::Decay;

    fn identity_members(n: usize, h: usize, w: usize) -> Vec<DenseDenoiser> {
        (0..n)
            .map(|_| {
                DenseNet::identity(h, w)
                    .deploy(&DeviceModel::ideal(), ProgramOptions::default(), 0)
                    .unwrap()
            })
            .collect()
    }

    fn blobs(n: usize, seed: u64) -> Dataset {
        let mut rng = stream(seed, 93, 0);
        let imgs = (0..n)
            .map(|_| {
                let (r0, c0) = (rng.random_range(0..6), rng.random_range(0..6));
                let v: f64 = rng.random_range(0.3..1.0);
                ImageTensor::from_fn(8, 8, |r, c| if r >= r0 && r < r0 + 3 && c >= c0 && c < c0 + 3 { v } else { 0.1 })
            })
            .collect();
        Dataset::new(imgs, vec![0; n], Split::Train).unwrap()
    }

    /// Solve `A x = b` by Gaussian elimination with partial pivoting.
    fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for col in 0..n {
            let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            for r in col + 1..n {
                let f = a[r][col] / a[col][col];
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
        let mut x = alloc::vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
            x[r] = (b[r] - s) / a[r][r];
        }
        x
    }

    #[test]
    fn one_hot_kernel_selects_member() {
        let h = 6;
        let nets = [DenseNet::identity(h, h), DenseNet::zeros(h, h)];
        let members: Vec<_> = nets
            .iter()
            .map(|n| n.deploy(&DeviceModel::ideal(), ProgramOptions::default(), 0).unwrap())
            .collect();
        let mut kernel = ConvLayer::zeros(2, 1, 3);
        kernel.set_tap(0, 0, 1, 1, 1.0);
        let f = FusionDenoiser::new(members, kernel, &DeviceModel::ideal(), ProgramOptions::default(), 0).unwrap();
        let img = ImageTensor::from_fn(h, h, |r, c| ((r + c) % 4) as f64 / 3.0);
        let out = f.forward(&img).unwrap();
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_kernel_gives_zero_image() {
        let f = FusionDenoiser::new(
            identity_members(8, 5, 5),
            ConvLayer::zeros(8, 1, 3),
            &DeviceModel::ideal(),
            ProgramOptions::default(),
            0,
        )
        .unwrap();
        let out = f.forward(&ImageTensor::from_fn(5, 5, |r, _| r as f64 / 4.0)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_epochs_keep_init() {
        let mut cfg = TrainConfig::fusion(0);
        cfg.epochs = 0;
        let t = train(&cfg, &identity_members(8, 8, 8), &NoiseSpec::standard_set(), &blobs(4, 0)).unwrap();
        assert_eq!(t.net, averaging_kernel(8, 3));
    }

    #[test]
    fn rejects_member_mismatch() {
        let mut members = identity_members(2, 5, 5);
        members.push(identity_members(1, 6, 6).remove(0));
        assert!(FusionDenoiser::new(
            members,
            ConvLayer::zeros(3, 1, 3),
            &DeviceModel::ideal(),
            ProgramOptions::default(),
            0
        )
        .is_err());
    }

    #[test]
    fn identity_members_on_clean_data_reach_least_squares() {
        // With identity members and clean inputs the regression target is
        // reachable; compare the trained kernel's error with the closed-form
        // least-squares fit over the same stacked patches.
        let members = identity_members(8, 8, 8);
        let data = blobs(40, 1);
        let mut cfg = TrainConfig::fusion(3);
        cfg.clean_fraction = 1.0;
        cfg.samples_per_epoch = None;
        cfg.epochs = 30;
        cfg.decay = Decay::Constant;
        cfg.learning_rate = 0.5;
        let start = ConvLayer::zeros(8, 1, 3);
        let t = train_from(&cfg, &members, &NoiseSpec::standard_set(), &data, start).unwrap();
        let rows = t.net.rows();
        let mut ata = alloc::vec![alloc::vec![0.0; rows]; rows];
        let mut atb = alloc::vec![0.0; rows];
        for img in data.images() {
            let stacked = stack_members(&members, img).unwrap();
            let cols = crate::conv::im2col(&stacked, 3);
            for (p, &tv) in img.data().iter().enumerate() {
                let row = &cols[p * rows..(p + 1) * rows];
                for i in 0..rows {
                    atb[i] += row[i] * tv;
                    for j in 0..rows {
                        ata[i][j] += row[i] * row[j];
                    }
                }
            }
        }
        for (i, r) in ata.iter_mut().enumerate() {
            r[i] += 1e-9;
        }
        let ls = ConvLayer { weights: solve(ata, atb), ..t.net.clone() };
        let fused = |k: &ConvLayer| {
            let f = FusionDenoiser::new(members.clone(), k.clone(), &DeviceModel::ideal(), ProgramOptions::default(), 0)
                .unwrap();
            data.images().iter().map(|im| mse(&f.forward(im).unwrap(), im).unwrap()).sum::<f64>() / data.len() as f64
        };
        let trained = fused(&t.net);
        let oracle = fused(&ls);
        assert!(trained < 0.005, "{trained}");
        assert!(trained <= oracle + 1e-3, "trained {trained} vs least squares {oracle}");
    }
}
