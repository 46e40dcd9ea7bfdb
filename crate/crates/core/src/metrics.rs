//! Image quality scores.
//!
//! SSIM uses a 7x7 uniform window over valid positions only, with
//! `C1 = 0.01^2`, `C2 = 0.03^2` and unbiased (N - 1) window covariances.
//! PSNR assumes a peak value of 1.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::image::ImageTensor;
use crate::{Error, Result};

pub const SSIM_WINDOW: usize = 7;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

pub fn mse(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let sq: Vec<f64> = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .collect();
    Ok(pairwise_sum(&sq) / sq.len() as f64)
}

/// `10 log10(1 / mse)`; `None` when the images are identical.
pub fn psnr_from_mse(mse: f64) -> Option<f64> {
    (mse > 0.0).then(|| -10.0 * libm::log10(mse))
}

pub fn psnr(a: &ImageTensor, b: &ImageTensor) -> Result<Option<f64>> {
    mse(a, b).map(psnr_from_mse)
}

/// Mean SSIM; multi-channel images are scored per channel and averaged.
pub fn ssim(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    a.ensure_same_shape(b)?;
    if a.height() < SSIM_WINDOW || a.width() < SSIM_WINDOW {
        return Err(Error::ImageTooSmall {
            height: a.height(),
            width: a.width(),
            window: SSIM_WINDOW,
        });
    }
    if a.channels() == 1 {
        return Ok(ssim_plane(a.data(), b.data(), a.height(), a.width()));
    }
    let pa = a.planes();
    let pb = b.planes();
    let total: f64 = pa
        .iter()
        .zip(&pb)
        .map(|(x, y)| ssim_plane(x.data(), y.data(), x.height(), x.width()))
        .sum();
    Ok(total / pa.len() as f64)
}

fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    let sa = Integral::new(a, h, w, |x, _| x);
    let sb = Integral::new(b, h, w, |_, y| y);
    let saa = Integral::new_pair(a, b, h, w, |x, _| x * x);
    let sbb = Integral::new_pair(a, b, h, w, |_, y| y * y);
    let sab = Integral::new_pair(a, b, h, w, |x, y| x * y);
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let unbias = n / (n - 1.0);
    let mut vals = Vec::with_capacity((h - SSIM_WINDOW + 1) * (w - SSIM_WINDOW + 1));
    for r in 0..=h - SSIM_WINDOW {
        for c in 0..=w - SSIM_WINDOW {
            let ma = sa.window(r, c) / n;
            let mb = sb.window(r, c) / n;
            let va = (saa.window(r, c) / n - ma * ma) * unbias;
            let vb = (sbb.window(r, c) / n - mb * mb) * unbias;
            let cov = (sab.window(r, c) / n - ma * mb) * unbias;
            let num = (2.0 * ma * mb + C1) * (2.0 * cov + C2);
            let den = (ma * ma + mb * mb + C1) * (va + vb + C2);
            vals.push(num / den);
        }
    }
    pairwise_sum(&vals) / vals.len() as f64
}

/// Summed-area table with a zero guard row and column.
struct Integral {
    table: Vec<f64>,
    stride: usize,
}

impl Integral {
    fn new(a: &[f64], h: usize, w: usize, f: impl Fn(f64, f64) -> f64) -> Self {
        Self::new_pair(a, a, h, w, f)
    }

    fn new_pair(a: &[f64], b: &[f64], h: usize, w: usize, f: impl Fn(f64, f64) -> f64) -> Self {
        let stride = w + 1;
        let mut table = vec![0.0; (h + 1) * stride];
        for r in 0..h {
            let mut run = 0.0;
            for c in 0..w {
                run += f(a[r * w + c], b[r * w + c]);
                table[(r + 1) * stride + c + 1] = table[r * stride + c + 1] + run;
            }
        }
        Self { table, stride }
    }

    fn window(&self, r: usize, c: usize) -> f64 {
        let k = SSIM_WINDOW;
        let t = &self.table;
        let s = self.stride;
        t[(r + k) * s + c + k] - t[r * s + c + k] - t[(r + k) * s + c] + t[r * s + c]
    }
}

/// Deterministic pairwise summation.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// SSIM and MSE for one reference/estimate pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub ssim: f64,
    pub mse: f64,
}

pub fn score(reference: &ImageTensor, estimate: &ImageTensor) -> Result<ImageScore> {
    Ok(ImageScore {
        ssim: ssim(reference, estimate)?,
        mse: mse(reference, estimate)?,
    })
}

/// Dataset-level means. PSNR is derived from the mean MSE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub noise: String,
    pub method: String,
    pub ssim: f64,
    pub mse: f64,
    pub psnr: Option<f64>,
    pub n: usize,
}

impl QualityReport {
    pub fn from_scores(
        noise: impl Into<String>,
        method: impl Into<String>,
        scores: &[ImageScore],
    ) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::InvalidDataset("no images scored".into()));
        }
        let n = scores.len();
        let ssims: Vec<f64> = scores.iter().map(|s| s.ssim).collect();
        let mses: Vec<f64> = scores.iter().map(|s| s.mse).collect();
        let mse = pairwise_sum(&mses) / n as f64;
        Ok(Self {
            noise: noise.into(),
            method: method.into(),
            ssim: pairwise_sum(&ssims) / n as f64,
            mse,
            psnr: psnr_from_mse(mse),
            n,
        })
    }
}
