//! Classical filters used as comparison anchors.
//!
//! Text forms: `gauss:SIGMA`, `median:WINDOW`, `tv:WEIGHT[:ITERS]`.
//! All filters work per channel, reflect at the borders (edge sample
//! repeated) and clamp their output to `[0, 1]`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::image::ImageTensor;
use crate::{Denoiser, Error, Result};

pub const DEFAULT_TV_ITERS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FilterSpec {
    GaussianBlur { sigma: f64 },
    Median { window: usize },
    TotalVariation { weight: f64, iters: usize },
}

/// Filter family, used to pick a tuning grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterKind {
    GaussianBlur,
    Median,
    TotalVariation,
}

impl FilterKind {
    pub const ALL: [FilterKind; 3] = [FilterKind::GaussianBlur, FilterKind::Median, FilterKind::TotalVariation];

    /// Candidate settings searched when tuning a filter for one noise.
    pub fn grid(&self) -> Vec<FilterSpec> {
        match self {
            FilterKind::GaussianBlur => [0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 1.0, 1.2, 1.5]
                .iter()
                .map(|&sigma| FilterSpec::GaussianBlur { sigma })
                .collect(),
            FilterKind::Median => [3, 5].iter().map(|&window| FilterSpec::Median { window }).collect(),
            FilterKind::TotalVariation => [0.02, 0.05, 0.08, 0.1, 0.15, 0.2, 0.3]
                .iter()
                .map(|&weight| FilterSpec::TotalVariation {
                    weight,
                    iters: DEFAULT_TV_ITERS,
                })
                .collect(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FilterKind::GaussianBlur => "gaussian-filter",
            FilterKind::Median => "median-filter",
            FilterKind::TotalVariation => "total-variation",
        }
    }
}

impl FilterSpec {
    pub fn kind(&self) -> FilterKind {
        match self {
            FilterSpec::GaussianBlur { .. } => FilterKind::GaussianBlur,
            FilterSpec::Median { .. } => FilterKind::Median,
            FilterSpec::TotalVariation { .. } => FilterKind::TotalVariation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            FilterSpec::GaussianBlur { sigma } => sigma > 0.0 && sigma.is_finite(),
            FilterSpec::Median { window } => window >= 3 && window % 2 == 1,
            FilterSpec::TotalVariation { weight, iters } => weight > 0.0 && weight.is_finite() && iters >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid filter parameters: {self}")))
        }
    }

    pub fn apply(&self, img: &ImageTensor) -> Result<ImageTensor> {
        self.validate()?;
        match *self {
            FilterSpec::GaussianBlur { sigma } => gaussian_blur(img, sigma),
            FilterSpec::Median { window } => median_filter(img, window),
            FilterSpec::TotalVariation { weight, iters } => tv_denoise(img, weight, iters),
        }
    }
}

impl Denoiser for FilterSpec {
    fn denoise(&self, noisy: &ImageTensor) -> Result<ImageTensor> {
        self.apply(noisy)
    }
}

impl fmt::Display for FilterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            FilterSpec::GaussianBlur { sigma } => write!(f, "gauss:{sigma}"),
            FilterSpec::Median { window } => write!(f, "median:{window}"),
            FilterSpec::TotalVariation { weight, iters } => write!(f, "tv:{weight}:{iters}"),
        }
    }
}

impl FromStr for FilterSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse {
            what: "filter spec",
            input: s.into(),
        };
        let parts: Vec<&str> = s.trim().split(':').collect();
        let spec = match parts.as_slice() {
            ["gauss" | "gaussian", v] => FilterSpec::GaussianBlur {
                sigma: v.parse().map_err(|_| bad())?,
            },
            ["median"] => FilterSpec::Median { window: 3 },
            ["median", w] => FilterSpec::Median {
                window: w.parse().map_err(|_| bad())?,
            },
            ["tv", w] => FilterSpec::TotalVariation {
                weight: w.parse().map_err(|_| bad())?,
                iters: DEFAULT_TV_ITERS,
            },
            ["tv", w, n] => FilterSpec::TotalVariation {
                weight: w.parse().map_err(|_| bad())?,
                iters: n.parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Index into `0..n` reflected about the edges, edge sample repeated
/// (`... 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...`).
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

/// Separable Gaussian blur, radius `ceil(3 sigma)`.
pub fn gaussian_blur(img: &ImageTensor, sigma: f64) -> Result<ImageTensor> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter("blur sigma must be positive".into()));
    }
    let radius = libm::ceil(3.0 * sigma) as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|d| libm::exp(-((d * d) as f64) / (2.0 * sigma * sigma)))
        .collect();
    let total: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= total;
    }
    img.map_planes(|plane| {
        let (h, w) = (plane.height(), plane.width());
        let src = plane.data();
        let mut tmp = vec![0.0; h * w];
        for r in 0..h {
            for c in 0..w {
                tmp[r * w + c] = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, kv)| kv * src[r * w + reflect(c as isize + k as isize - radius, w)])
                    .sum();
            }
        }
        let mut out = vec![0.0; h * w];
        for r in 0..h {
            for c in 0..w {
                let v: f64 = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, kv)| kv * tmp[reflect(r as isize + k as isize - radius, h) * w + c])
                    .sum();
                out[r * w + c] = v.clamp(0.0, 1.0);
            }
        }
        ImageTensor::new(plane.shape(), out)
    })
}

/// Per-pixel median over a `window x window` neighbourhood.
pub fn median_filter(img: &ImageTensor, window: usize) -> Result<ImageTensor> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("median window {window} must be odd and >= 3")));
    }
    let half = (window / 2) as isize;
    img.map_planes(|plane| {
        let (h, w) = (plane.height(), plane.width());
        let src = plane.data();
        let mut buf = Vec::with_capacity(window * window);
        let mut out = Vec::with_capacity(h * w);
        for r in 0..h as isize {
            for c in 0..w as isize {
                buf.clear();
                for dy in -half..=half {
                    let y = reflect(r + dy, h);
                    for dx in -half..=half {
                        buf.push(src[y * w + reflect(c + dx, w)]);
                    }
                }
                let mid = buf.len() / 2;
                let (_, m, _) = buf.select_nth_unstable_by(mid, f64::total_cmp);
                out.push(m.clamp(0.0, 1.0));
            }
        }
        ImageTensor::new(plane.shape(), out)
    })
}

/// Isotropic total variation with forward differences (zero across the
/// last row / column).
pub fn total_variation(plane: &[f64], h: usize, w: usize) -> f64 {
    let mut tv = 0.0;
    for r in 0..h {
        for c in 0..w {
            let v = plane[r * w + c];
            let gy = if r + 1 < h { plane[(r + 1) * w + c] - v } else { 0.0 };
            let gx = if c + 1 < w { plane[r * w + c + 1] - v } else { 0.0 };
            tv += libm::sqrt(gx * gx + gy * gy);
        }
    }
    tv
}

/// `|u - f|^2 + 2 * weight * TV(u)`.
pub fn tv_energy(u: &[f64], f: &[f64], h: usize, w: usize, weight: f64) -> f64 {
    let fid: f64 = u.iter().zip(f).map(|(a, b)| (a - b) * (a - b)).sum();
    fid + 2.0 * weight * total_variation(u, h, w)
}

/// Chambolle's dual projection iterations for
/// `min_u |u - f|^2 + 2 * weight * TV(u)`; `u = f + div p`.
pub fn tv_denoise(img: &ImageTensor, weight: f64, iters: usize) -> Result<ImageTensor> {
    if !(weight > 0.0) || iters == 0 {
        return Err(Error::InvalidParameter("tv needs weight > 0 and at least one iteration".into()));
    }
    img.map_planes(|plane| {
        let (h, w) = (plane.height(), plane.width());
        let u = chambolle(plane.data(), h, w, weight, iters, |_| {});
        ImageTensor::new(plane.shape(), u.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
    })
}

/// Plane-level solver; `observe` sees the primal iterate after every step.
pub fn chambolle(f: &[f64], h: usize, w: usize, weight: f64, iters: usize, mut observe: impl FnMut(&[f64])) -> Vec<f64> {
    let n = h * w;
    let tau = 0.25;
    let mut py = vec![0.0; n];
    let mut px = vec![0.0; n];
    let mut u = f.to_vec();
    for _ in 0..iters {
        // gradient of the current primal estimate
        let mut gy = vec![0.0; n];
        let mut gx = vec![0.0; n];
        for r in 0..h {
            for c in 0..w {
                let k = r * w + c;
                if r + 1 < h {
                    gy[k] = u[k + w] - u[k];
                }
                if c + 1 < w {
                    gx[k] = u[k + 1] - u[k];
                }
            }
        }
        for k in 0..n {
            let norm = 1.0 + tau / weight * libm::sqrt(gy[k] * gy[k] + gx[k] * gx[k]);
            py[k] = (py[k] - tau * gy[k]) / norm;
            px[k] = (px[k] - tau * gx[k]) / norm;
        }
        // u = f - div p with the adjoint of the forward difference
        for r in 0..h {
            for c in 0..w {
                let k = r * w + c;
                let mut d = -py[k] - px[k];
                if r > 0 {
                    d += py[k - w];
                }
                if c > 0 {
                    d += px[k - 1];
                }
                u[k] = f[k] + d;
            }
        }
        observe(&u);
    }
    u
}

/// `(ssim, mse, psnr dB)` for each noise of the standard set, in order.
pub type ReferenceRow = (&'static str, [(f64, f64, f64); 8]);

/// Published scores of filters that are not implemented here, per noise in
/// [`crate::noise::NoiseSpec::standard_set`] order.
pub const REFERENCE_SCORES: [ReferenceRow; 3] = [
    (
        "bilateral-filter",
        [
            (0.678, 0.008, 20.8),
            (0.503, 0.031, 15.0),
            (0.288, 0.116, 9.3),
            (0.638, 0.027, 15.7),
            (0.469, 0.057, 12.4),
            (0.322, 0.088, 10.5),
            (0.714, 0.045, 13.6),
            (0.648, 0.067, 11.9),
        ],
    ),
    (
        "nl-means-filter",
        [
            (0.913, 0.002, 27.2),
            (0.696, 0.015, 18.3),
            (0.351, 0.057, 12.5),
            (0.686, 0.010, 19.9),
            (0.456, 0.032, 15.0),
            (0.345, 0.057, 12.4),
            (0.726, 0.044, 13.7),
            (0.679, 0.111, 9.8),
        ],
    ),
    (
        "wavelet-filter",
        [
            (0.753, 0.005, 22.4),
            (0.559, 0.038, 14.2),
            (0.346, 0.141, 8.5),
            (0.616, 0.033, 14.7),
            (0.482, 0.054, 13.2),
            (0.368, 0.078, 11.0),
            (0.765, 0.029, 15.5),
            (0.712, 0.040, 13.7),
        ],
    ),
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Shape;
    use crate::metrics::mse;
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_image(h: usize, w: usize, seed: u64) -> ImageTensor {
        let mut rng = stream(seed, 60, 0);
        ImageTensor::from_fn(h, w, |_, _| rng.random())
    }

    #[test]
    fn parses_text_forms() {
        assert_eq!("gauss:0.8".parse::<FilterSpec>().unwrap(), FilterSpec::GaussianBlur { sigma: 0.8 });
        assert_eq!("median:3".parse::<FilterSpec>().unwrap(), FilterSpec::Median { window: 3 });
        assert_eq!(
            "tv:0.1:50".parse::<FilterSpec>().unwrap(),
            FilterSpec::TotalVariation { weight: 0.1, iters: 50 }
        );
        for bad in ["median:4", "gauss:0", "tv:0.1:0", "box:3", "tv:-1"] {
            assert!(bad.parse::<FilterSpec>().is_err(), "{bad}");
        }
        for s in ["gauss:0.8", "median:5", "tv:0.1:50"] {
            assert_eq!(format!("{}", s.parse::<FilterSpec>().unwrap()), s);
        }
    }

    #[test]
    fn reflect_repeats_edge() {
        let idx: Vec<usize> = (-3..7).map(|i| reflect(i, 4)).collect();
        assert_eq!(idx, vec![2, 1, 0, 0, 1, 2, 3, 3, 2, 1]);
    }

    #[test]
    fn constant_images_are_fixed_points() {
        let img = ImageTensor::filled(Shape::gray(9, 11), 0.37);
        for spec in ["gauss:1.2", "median:3", "median:5", "tv:0.2:30"] {
            let out = spec.parse::<FilterSpec>().unwrap().apply(&img).unwrap();
            for v in out.data() {
                assert!((v - 0.37).abs() < 1e-12, "{spec}");
            }
        }
    }

    #[test]
    fn tiny_sigma_is_nearly_identity() {
        let img = random_image(16, 16, 1);
        let out = gaussian_blur(&img, 0.1).unwrap();
        assert!(mse(&img, &out).unwrap() < 1e-4);
    }

    #[test]
    fn blur_matches_direct_2d_convolution() {
        let img = random_image(7, 9, 2);
        let sigma = 0.7;
        let out = gaussian_blur(&img, sigma).unwrap();
        let r = 3isize;
        let g = |d: isize| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp();
        let norm: f64 = (-r..=r).map(g).sum::<f64>().powi(2);
        for y in 0..7 {
            for x in 0..9 {
                let mut s = 0.0;
                for dy in -r..=r {
                    for dx in -r..=r {
                        s += g(dy) * g(dx) * img.get(reflect(y + dy, 7), reflect(x + dx, 9), 0);
                    }
                }
                assert!((out.get(y as usize, x as usize, 0) - (s / norm).clamp(0.0, 1.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn median_removes_single_salt_pixel() {
        let mut img = ImageTensor::zeros(Shape::gray(7, 7));
        img.set(3, 3, 0, 1.0);
        let out = median_filter(&img, 3).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tiny_tv_weight_is_identity() {
        let img = random_image(12, 12, 3);
        let out = tv_denoise(&img, 1e-9, 50).unwrap();
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn tv_reduces_total_variation_of_noisy_steps() {
        let mut rng = stream(4, 61, 0);
        let img = ImageTensor::from_fn(16, 16, |r, c| {
            let base = if r < 8 { 0.2 } else { 0.8 } + if c < 5 { 0.1 } else { 0.0 };
            base + rng.random_range(-0.02..0.02)
        });
        let out = tv_denoise(&img, 0.05, 50).unwrap();
        assert!(total_variation(out.data(), 16, 16) <= total_variation(img.data(), 16, 16));
    }

    #[test]
    fn tv_energy_decreases_every_iteration() {
        for seed in 0..5 {
            let img = random_image(20, 20, seed);
            let f = img.data();
            for weight in [0.05, 0.1, 0.3] {
                let mut energies = vec![tv_energy(f, f, 20, 20, weight)];
                chambolle(f, 20, 20, weight, 60, |u| energies.push(tv_energy(u, f, 20, 20, weight)));
                for pair in energies.windows(2) {
                    assert!(pair[1] <= pair[0] + 1e-12, "seed {seed} weight {weight}: {pair:?}");
                }
            }
        }
    }

    #[test]
    fn rgb_is_filtered_per_channel() {
        let planes: Vec<_> = (0..3).map(|s| random_image(8, 8, 10 + s)).collect();
        let rgb = ImageTensor::from_planes(&planes).unwrap();
        let out = median_filter(&rgb, 3).unwrap();
        for (c, p) in planes.iter().enumerate() {
            assert_eq!(out.plane(c), median_filter(p, 3).unwrap());
        }
    }

    proptest! {
        #[test]
        fn filters_preserve_shape_and_range(seed in 0u64..200, h in 3usize..14, w in 3usize..14) {
            let img = random_image(h, w, seed).map(|v| v * 1.6 - 0.3);
            for spec in ["gauss:0.8", "median:3", "tv:0.1:20"] {
                let out = spec.parse::<FilterSpec>().unwrap().apply(&img).unwrap();
                prop_assert_eq!(out.shape(), img.shape());
                prop_assert!(out.min() >= 0.0 && out.max() <= 1.0);
            }
        }

        #[test]
        fn median_is_idempotent_on_fixed_points(seed in 0u64..200) {
            let img = random_image(10, 10, seed);
            // iterate to a root signal, then one more pass must not move it
            let mut cur = img;
            for _ in 0..50 {
                let next = median_filter(&cur, 3).unwrap();
                if next == cur {
                    break;
                }
                cur = next;
            }
            let again = median_filter(&cur, 3).unwrap();
            if again == cur {
                prop_assert_eq!(median_filter(&again, 3).unwrap(), again);
            }
        }
    }
}
