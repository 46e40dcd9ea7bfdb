//! Data-parallel experiment drivers.
//!
//! Per-image work is spread over the rayon pool. Every image draws its
//! noise from its own substream and results are collected in input order,
//! then reduced sequentially, so outputs do not depend on the worker count.

use memdenoise_core::baselines::{FilterKind, FilterSpec};
use memdenoise_core::classify::{self, AccuracyReport, Classifier, Pipeline};
use memdenoise_core::dense::{self, DenseNet, Trained};
use memdenoise_core::metrics::{score, ImageScore, QualityReport};
use memdenoise_core::noise::NoiseSpec;
use memdenoise_core::train::TrainConfig;
use memdenoise_core::{Dataset, Denoiser, ImageTensor};
use rayon::prelude::*;

use crate::Result;

pub type SharedDenoiser<'a> = &'a (dyn Denoiser + Sync);

/// Run `f` on a dedicated pool of `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
        .install(f)
}

/// Corrupted copies of every image; image `i` uses noise substream `i`.
pub fn corrupt_all(data: &Dataset, noise: &NoiseSpec, seed: u64) -> Vec<ImageTensor> {
    data.images()
        .par_iter()
        .enumerate()
        .map(|(i, img)| noise.corrupt_indexed(img, seed, i as u64))
        .collect()
}

/// Score `inputs` (optionally denoised first) against the clean images.
pub fn score_all(clean: &[ImageTensor], inputs: &[ImageTensor], denoiser: Option<SharedDenoiser<'_>>) -> Result<Vec<ImageScore>> {
    let scores = clean
        .par_iter()
        .zip(inputs.par_iter())
        .map(|(c, x)| match denoiser {
            Some(d) => score(c, &d.denoise(x)?),
            None => score(c, x),
        })
        .collect::<memdenoise_core::Result<Vec<_>>>()?;
    Ok(scores)
}

/// One quality row: corrupt, optionally denoise, score, average.
pub fn quality(
    data: &Dataset,
    noise: &NoiseSpec,
    method: &str,
    denoiser: Option<SharedDenoiser<'_>>,
    seed: u64,
) -> Result<QualityReport> {
    let noisy = corrupt_all(data, noise, seed);
    let scores = score_all(data.images(), &noisy, denoiser)?;
    Ok(QualityReport::from_scores(noise.to_string(), method, &scores)?)
}

/// Best setting of a filter family for one noise, by mean SSIM (first
/// grid entry wins ties).
pub fn tune_filter(kind: FilterKind, data: &Dataset, noise: &NoiseSpec, seed: u64) -> Result<(FilterSpec, QualityReport)> {
    let noisy = corrupt_all(data, noise, seed);
    let mut best: Option<(FilterSpec, QualityReport)> = None;
    for spec in kind.grid() {
        let scores = score_all(data.images(), &noisy, Some(&spec))?;
        let r = QualityReport::from_scores(noise.to_string(), format!("{} ({spec})", kind.name()), &scores)?;
        if best.as_ref().is_none_or(|(_, b)| r.ssim > b.ssim) {
            best = Some((spec, r));
        }
    }
    Ok(best.expect("non-empty grid"))
}

/// Train one dense denoiser per noise spec, concurrently.
pub fn train_dense_many(
    specs: &[NoiseSpec],
    data: &Dataset,
    cfg_for: impl Fn(&NoiseSpec) -> TrainConfig + Sync,
) -> Result<Vec<Trained<DenseNet>>> {
    let out = specs
        .par_iter()
        .map(|spec| dense::train(&cfg_for(spec), data))
        .collect::<memdenoise_core::Result<Vec<_>>>()?;
    Ok(out)
}

/// Parallel counterpart of [`classify::evaluate`] with identical results.
pub fn accuracy(
    clf: &Classifier,
    data: &Dataset,
    pipeline: Option<(&str, SharedDenoiser<'_>)>,
    noise: Option<&NoiseSpec>,
    seed: u64,
) -> Result<AccuracyReport> {
    if let Some(n) = noise {
        n.validate()?;
    }
    fn as_pipeline<'a>(p: Option<(&'a str, SharedDenoiser<'a>)>) -> Option<Pipeline<'a>> {
        p.map(|(name, d)| Pipeline {
            name,
            denoiser: d as &dyn Denoiser,
        })
    }
    let hits = data
        .images()
        .par_iter()
        .zip(data.labels().par_iter())
        .enumerate()
        .map(|(i, (img, &label))| {
            let x = classify::prepare(img, i, noise, as_pipeline(pipeline), seed)?;
            Ok(usize::from(clf.predict(&x)? == label))
        })
        .collect::<memdenoise_core::Result<Vec<_>>>()?;
    let correct: usize = hits.iter().sum();
    Ok(AccuracyReport {
        condition: classify::condition_of(noise, as_pipeline(pipeline)),
        noise: noise.copied(),
        accuracy: if data.is_empty() {
            0.0
        } else {
            correct as f64 / data.len() as f64
        },
        n: data.len(),
    })
}
