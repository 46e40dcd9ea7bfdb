//! Behavioural memristor model.
//!
//! Conductances are normalised so the programmable window is `[0, 1]`.
//! A device holds one of `L` uniformly spaced stable levels (or any value
//! when ideal) and every programming event lands with additive Gaussian
//! error of standard deviation `variation_sigma` times the window width.

use core::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Number of stable resistive states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Levels {
    /// Continuous conductance.
    Ideal,
    /// `L >= 2` discrete states.
    Finite(u32),
}

impl Levels {
    pub fn count(&self) -> Option<u32> {
        match self {
            Levels::Ideal => None,
            Levels::Finite(l) => Some(*l),
        }
    }
}

impl fmt::Display for Levels {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Levels::Ideal => f.write_str("ideal"),
            Levels::Finite(l) => write!(f, "{l}"),
        }
    }
}

impl core::str::FromStr for Levels {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("ideal") || s.eq_ignore_ascii_case("inf") {
            return Ok(Levels::Ideal);
        }
        match s.parse::<u32>() {
            Ok(l) if l >= 2 => Ok(Levels::Finite(l)),
            _ => Err(Error::Parse {
                what: "levels",
                input: s.into(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceModel {
    pub g_min: f64,
    pub g_max: f64,
    pub levels: Levels,
    pub variation_sigma: f64,
}

impl Default for DeviceModel {
    fn default() -> Self {
        Self::ideal()
    }
}

impl DeviceModel {
    pub const fn ideal() -> Self {
        Self {
            g_min: 0.0,
            g_max: 1.0,
            levels: Levels::Ideal,
            variation_sigma: 0.0,
        }
    }

    pub fn new(levels: Levels, variation_sigma: f64) -> Result<Self> {
        let m = Self {
            levels,
            variation_sigma,
            ..Self::ideal()
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_levels(levels: u32) -> Result<Self> {
        Self::new(Levels::Finite(levels), 0.0)
    }

    pub fn with_variation(sigma: f64) -> Result<Self> {
        Self::new(Levels::Ideal, sigma)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.g_min < self.g_max) {
            return Err(Error::InvalidParameter("g_min must be below g_max".into()));
        }
        if let Levels::Finite(l) = self.levels {
            if l < 2 {
                return Err(Error::InvalidParameter("need at least 2 levels".into()));
            }
        }
        if !(self.variation_sigma >= 0.0) || !self.variation_sigma.is_finite() {
            return Err(Error::InvalidParameter(
                "variation sigma must be a non-negative number".into(),
            ));
        }
        Ok(())
    }

    pub fn is_ideal(&self) -> bool {
        self.levels == Levels::Ideal && self.variation_sigma == 0.0
    }

    /// Quantise then perturb: one programming event.
    pub fn program<R: Rng + ?Sized>(&self, g: f64, rng: &mut R) -> f64 {
        apply_variation(quantize(g, self), self, rng)
    }
}

/// Snap `g` to the nearest of `L` uniformly spaced levels. Ties go to the
/// lower level.
pub fn quantize(g: f64, model: &DeviceModel) -> f64 {
    let span = model.g_max - model.g_min;
    let u = ((g - model.g_min) / span).clamp(0.0, 1.0);
    let Levels::Finite(l) = model.levels else {
        return model.g_min + u * span;
    };
    let steps = f64::from(l - 1);
    let k = u * steps;
    let lower = libm::floor(k);
    let idx = if k - lower > 0.5 { lower + 1.0 } else { lower };
    model.g_min + idx / steps * span
}

/// Additive programming error `N(0, sigma^2)` scaled to the window, clamped.
pub fn apply_variation<R: Rng + ?Sized>(g: f64, model: &DeviceModel, rng: &mut R) -> f64 {
    if model.variation_sigma == 0.0 {
        return g;
    }
    let span = model.g_max - model.g_min;
    // sigma is validated finite and positive here
    let normal = Normal::new(0.0, model.variation_sigma * span).expect("valid sigma");
    (g + normal.sample(rng)).clamp(model.g_min, model.g_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn levels(l: u32) -> DeviceModel {
        DeviceModel::with_levels(l).unwrap()
    }

    /// Brute force: scan every level, keep the closest, prefer the lower on ties.
    fn nearest_level(g: f64, l: u32) -> f64 {
        let mut best = 0.0;
        let mut best_d = f64::INFINITY;
        for k in 0..l {
            let v = k as f64 / (l - 1) as f64;
            let d = (v - g).abs();
            if d < best_d - 1e-15 {
                best = v;
                best_d = d;
            }
        }
        best
    }

    #[test]
    fn binary_device_ties_round_down() {
        assert_eq!(quantize(0.5, &levels(2)), 0.0);
        assert_eq!(quantize(0.7, &levels(2)), 1.0);
    }

    #[test]
    fn quantize_256_matches_brute_force() {
        let q = quantize(0.333, &levels(256));
        assert_eq!(q, 85.0 / 255.0);
        assert_eq!(q, nearest_level(0.333, 256));
    }

    #[test]
    fn ideal_passes_through() {
        assert_eq!(quantize(0.123456, &DeviceModel::ideal()), 0.123456);
    }

    #[test]
    fn zero_sigma_is_identity() {
        let mut rng = stream(1, 0, 0);
        let m = DeviceModel::ideal();
        for g in [0.0, 0.3, 1.0] {
            assert_eq!(apply_variation(g, &m, &mut rng), g);
        }
    }

    #[test]
    fn variation_is_clamped_at_window_top() {
        let m = DeviceModel::with_variation(0.05).unwrap();
        let mut rng = stream(2, 0, 0);
        for _ in 0..1000 {
            let g = apply_variation(1.0, &m, &mut rng);
            assert!((0.0..=1.0).contains(&g));
        }
    }

    #[test]
    fn variation_sample_std_matches_sigma() {
        let m = DeviceModel::with_variation(0.025).unwrap();
        let mut rng = stream(3, 0, 0);
        let n = 1_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let d = apply_variation(0.5, &m, &mut rng) - 0.5;
            s += d;
            s2 += d * d;
        }
        let mean = s / n as f64;
        let std = (s2 / n as f64 - mean * mean).sqrt();
        assert!((std / 0.025 - 1.0).abs() < 0.02, "std {std}");
    }

    #[test]
    fn rejects_bad_models() {
        assert!(DeviceModel::with_levels(1).is_err());
        assert!(DeviceModel::with_variation(-0.1).is_err());
        assert!("1".parse::<Levels>().is_err());
        assert_eq!("ideal".parse::<Levels>().unwrap(), Levels::Ideal);
        assert_eq!("64".parse::<Levels>().unwrap(), Levels::Finite(64));
    }

    proptest! {
        #[test]
        fn quantize_is_idempotent_and_on_grid(g in 0.0f64..=1.0, l in prop::sample::select(vec![2u32, 16, 64, 128, 256])) {
            let m = levels(l);
            let q = quantize(g, &m);
            prop_assert_eq!(quantize(q, &m), q);
            let k = q * (l - 1) as f64;
            prop_assert!((k - k.round()).abs() < 1e-9);
            prop_assert_eq!(q, (k.round()) / (l - 1) as f64);
            prop_assert_eq!(q, nearest_level(g, l));
        }

        #[test]
        fn quantize_is_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0, l in 2u32..300) {
            let m = levels(l);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(quantize(lo, &m) <= quantize(hi, &m));
        }
    }
}
