//! Downstream classifier used to measure how much denoising helps
//! recognition: an MLP trained on clean images, evaluated on clean,
//! noisy and denoised copies of a test set.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::noise::NoiseSpec;
use crate::rng::{domain, stream};
use crate::train::{TrainConfig, TrainLog};
use crate::{Dataset, Denoiser, Error, ImageTensor, Result};

pub const CLASSES: usize = 10;
pub const DEFAULT_HIDDEN: usize = 100;

/// `P -> H -> 10` perceptron with a ReLU hidden layer. Weight matrices are
/// row-major `in x out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    inputs: usize,
    hidden: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct Grads {
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

impl Classifier {
    /// Uniform `+-1/sqrt(fan_in)` initialisation for weights and biases.
    pub fn new(inputs: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = stream(seed, domain::INIT, 1);
        let mut uniform = |n: usize, fan_in: usize| -> Vec<f64> {
            let a = 1.0 / libm::sqrt(fan_in as f64);
            (0..n).map(|_| rng.random_range(-a..a)).collect()
        };
        let w1 = uniform(inputs * hidden, inputs);
        let b1 = uniform(hidden, inputs);
        let w2 = uniform(hidden * CLASSES, hidden);
        let b2 = uniform(CLASSES, hidden);
        Self {
            inputs,
            hidden,
            w1,
            b1,
            w2,
            b2,
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    fn check_input(&self, img: &ImageTensor) -> Result<()> {
        if img.data().len() != self.inputs {
            return Err(Error::ShapeMismatch {
                expected: alloc::format!("{} values", self.inputs),
                actual: alloc::format!("{} ({} values)", img.shape(), img.data().len()),
            });
        }
        Ok(())
    }

    /// Hidden activations and class logits.
    fn forward_raw(&self, x: &[f64]) -> (Vec<f64>, [f64; CLASSES]) {
        let mut h = self.b1.clone();
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                let row = &self.w1[i * self.hidden..(i + 1) * self.hidden];
                for (hj, wij) in h.iter_mut().zip(row) {
                    *hj += xi * wij;
                }
            }
        }
        for v in &mut h {
            *v = v.max(0.0);
        }
        let mut z = [0.0; CLASSES];
        z.copy_from_slice(&self.b2);
        for (j, &hj) in h.iter().enumerate() {
            if hj != 0.0 {
                for (c, zc) in z.iter_mut().enumerate() {
                    *zc += hj * self.w2[j * CLASSES + c];
                }
            }
        }
        (h, z)
    }

    /// Class logits. Inputs are clamped to `[0, 1]` first.
    pub fn logits(&self, img: &ImageTensor) -> Result<[f64; CLASSES]> {
        self.check_input(img)?;
        let x: Vec<f64> = img.data().iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Ok(self.forward_raw(&x).1)
    }

    pub fn predict(&self, img: &ImageTensor) -> Result<u8> {
        let z = self.logits(img)?;
        let mut best = 0;
        for c in 1..CLASSES {
            if z[c] > z[best] {
                best = c;
            }
        }
        Ok(best as u8)
    }

    /// Cross-entropy of one sample, accumulating its gradient into `g`.
    fn accumulate(&self, x: &[f64], label: usize, g: &mut Grads) -> f64 {
        let (h, z) = self.forward_raw(x);
        let (p, loss) = softmax_xent(&z, label);
        let mut dz = p;
        dz[label] -= 1.0;
        let mut dh = vec![0.0; self.hidden];
        for (j, &hj) in h.iter().enumerate() {
            let row = &self.w2[j * CLASSES..(j + 1) * CLASSES];
            let grow = &mut g.w2[j * CLASSES..(j + 1) * CLASSES];
            let mut s = 0.0;
            for c in 0..CLASSES {
                grow[c] += hj * dz[c];
                s += row[c] * dz[c];
            }
            dh[j] = if hj > 0.0 { s } else { 0.0 };
        }
        for (b, d) in g.b2.iter_mut().zip(dz) {
            *b += d;
        }
        for (b, d) in g.b1.iter_mut().zip(&dh) {
            *b += d;
        }
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                let grow = &mut g.w1[i * self.hidden..(i + 1) * self.hidden];
                for (gw, d) in grow.iter_mut().zip(&dh) {
                    *gw += xi * d;
                }
            }
        }
        loss
    }

    fn zero_grads(&self) -> Grads {
        Grads {
            w1: vec![0.0; self.w1.len()],
            b1: vec![0.0; self.b1.len()],
            w2: vec![0.0; self.w2.len()],
            b2: vec![0.0; self.b2.len()],
        }
    }

    fn step(&mut self, g: &Grads, scale: f64) {
        for (p, d) in [
            (&mut self.w1, &g.w1),
            (&mut self.b1, &g.b1),
            (&mut self.w2, &g.w2),
            (&mut self.b2, &g.b2),
        ] {
            for (w, dw) in p.iter_mut().zip(d) {
                *w -= scale * dw;
            }
        }
    }
}

/// Softmax probabilities and the cross-entropy `-log p[label]`.
fn softmax_xent(z: &[f64; CLASSES], label: usize) -> ([f64; CLASSES], f64) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p = [0.0; CLASSES];
    let mut s = 0.0;
    for c in 0..CLASSES {
        p[c] = libm::exp(z[c] - m);
        s += p[c];
    }
    for v in &mut p {
        *v /= s;
    }
    let loss = libm::log(s) - (z[label] - m);
    (p, loss)
}

/// Trained classifier plus its per-epoch mean cross-entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedClassifier {
    pub classifier: Classifier,
    pub epoch_loss: TrainLog,
}

/// Mini-batch SGD on cross-entropy over clean images.
pub fn train_classifier(data: &Dataset, cfg: &TrainConfig, hidden: usize) -> Result<TrainedClassifier> {
    cfg.validate()?;
    let shape = data
        .shape()
        .ok_or_else(|| Error::InvalidDataset("cannot train a classifier on an empty dataset".into()))?;
    if hidden == 0 {
        return Err(Error::InvalidParameter("hidden width must be positive".into()));
    }
    let mut clf = Classifier::new(shape.len(), hidden, cfg.seed);
    let mut log = TrainLog::default();
    let mut x = vec![0.0; shape.len()];
    for epoch in 0..cfg.epochs {
        let rate = cfg.rate(epoch);
        let order = cfg.epoch_order(data.len(), epoch);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch) {
            let mut g = clf.zero_grads();
            for &i in batch {
                for (xv, v) in x.iter_mut().zip(data.images()[i].data()) {
                    *xv = v.clamp(0.0, 1.0);
                }
                total += clf.accumulate(&x, usize::from(data.labels()[i]), &mut g);
            }
            clf.step(&g, rate / batch.len() as f64);
        }
        log.push(total / order.len().max(1) as f64)?;
    }
    Ok(TrainedClassifier {
        classifier: clf,
        epoch_loss: log,
    })
}

/// What the classifier was shown.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "method", rename_all = "lowercase")]
pub enum Condition {
    Clean,
    Noisy,
    Denoised(String),
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::Clean => f.write_str("clean"),
            Condition::Noisy => f.write_str("noisy"),
            Condition::Denoised(m) => write!(f, "denoised({m})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub condition: Condition,
    pub noise: Option<NoiseSpec>,
    pub accuracy: f64,
    pub n: usize,
}

/// Optional denoiser with the name reported in [`Condition::Denoised`].
#[derive(Clone, Copy)]
pub struct Pipeline<'a> {
    pub name: &'a str,
    pub denoiser: &'a dyn Denoiser,
}

impl fmt::Debug for Pipeline<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Pipeline").field("name", &self.name).finish_non_exhaustive()
    }
}

/// Test image `index` as the classifier sees it: corrupted with its own
/// noise substream, then denoised.
pub fn prepare(
    img: &ImageTensor,
    index: usize,
    noise: Option<&NoiseSpec>,
    pipeline: Option<Pipeline<'_>>,
    seed: u64,
) -> Result<ImageTensor> {
    let noisy = match noise {
        Some(spec) => spec.corrupt_indexed(img, seed, index as u64),
        None => img.clone(),
    };
    match pipeline {
        Some(p) => {
            let out = p.denoiser.denoise(&noisy)?;
            out.ensure_same_shape(img)?;
            Ok(out)
        }
        None => Ok(noisy),
    }
}

pub fn condition_of(noise: Option<&NoiseSpec>, pipeline: Option<Pipeline<'_>>) -> Condition {
    match (pipeline, noise) {
        (Some(p), _) => Condition::Denoised(p.name.into()),
        (None, Some(_)) => Condition::Noisy,
        (None, None) => Condition::Clean,
    }
}

/// Corrupt -> (denoise) -> classify over the whole dataset.
pub fn evaluate(
    clf: &Classifier,
    data: &Dataset,
    pipeline: Option<Pipeline<'_>>,
    noise: Option<&NoiseSpec>,
    seed: u64,
) -> Result<AccuracyReport> {
    if let Some(spec) = noise {
        spec.validate()?;
    }
    let mut correct = 0usize;
    for (i, (img, &label)) in data.images().iter().zip(data.labels()).enumerate() {
        let x = prepare(img, i, noise, pipeline, seed)?;
        if clf.predict(&x)? == label {
            correct += 1;
        }
    }
    Ok(AccuracyReport {
        condition: condition_of(noise, pipeline),
        noise: noise.copied(),
        accuracy: if data.is_empty() { 0.0 } else { correct as f64 / data.len() as f64 },
        n: data.len(),
    })
}
