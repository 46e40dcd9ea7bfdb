//! Differential weight mapping onto 256x64 memristor tiles.
//!
//! A signed weight is held by a pair of devices `(g_pos, g_neg)` and read as
//! `g_pos - g_neg`. Matrices larger than one tile are partitioned into a grid
//! of tiles; a matrix-vector product sums per-tile partial currents in a
//! fixed order so results never depend on scheduling.
//!
//! Weights are normalised into `[-1, 1]` before programming and the scale is
//! returned through the readout gain (one gain per output column by
//! default, mirroring one readout opamp per column).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::device::{apply_variation, quantize, DeviceModel, Levels};
use crate::{Error, Result};

pub const TILE_ROWS: usize = 256;
pub const TILE_COLS: usize = 64;

/// `(tile rows, tile cols)` needed for a `rows x cols` matrix, per polarity.
pub const fn tile_grid(rows: usize, cols: usize) -> (usize, usize) {
    (rows.div_ceil(TILE_ROWS), cols.div_ceil(TILE_COLS))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifferentialWeight {
    pub g_pos: f64,
    pub g_neg: f64,
}

impl DifferentialWeight {
    pub fn weight(&self) -> f64 {
        self.g_pos - self.g_neg
    }
}

/// How a normalised weight is split over the device pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightEncoding {
    /// `g_pos = q((1 + w) / 2)`, `g_neg = q((1 - w) / 2)`. Zero sits at
    /// mid-window, so a binary device still resolves the sign of `w`.
    #[default]
    Balanced,
    /// One device of the pair carries `|w|`, the other stays at zero.
    OneSided,
}

/// Granularity of the readout gain that undoes weight normalisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GainMode {
    #[default]
    PerColumn,
    PerLayer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ProgramOptions {
    pub encoding: WeightEncoding,
    pub gain: GainMode,
}

/// Dropout / pruning request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sparsity {
    /// Fraction of input rows disconnected.
    pub dropout: f64,
    /// Fraction of device pairs disconnected.
    pub prune: f64,
    /// Only the first `droppable_rows` rows are dropout candidates (`None`
    /// means all rows). Used to keep a bias row connected.
    pub droppable_rows: Option<usize>,
    /// Scale the readout gain by the inverse kept fraction.
    pub compensate: bool,
}

impl Sparsity {
    pub const fn none() -> Self {
        Self {
            dropout: 0.0,
            prune: 0.0,
            droppable_rows: None,
            compensate: true,
        }
    }

    pub const fn dropout(frac: f64) -> Self {
        Self {
            dropout: frac,
            ..Self::none()
        }
    }

    pub const fn prune(frac: f64) -> Self {
        Self {
            prune: frac,
            ..Self::none()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, f) in [("dropout", self.dropout), ("prune", self.prune)] {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::InvalidParameter(format!(
                    "{name} fraction {f} outside [0, 1)"
                )));
            }
        }
        Ok(())
    }
}

impl Default for Sparsity {
    fn default() -> Self {
        Self::none()
    }
}

/// A weight matrix programmed onto differential tiles.
///
/// Conductances are stored row-major over the whole matrix; the tile grid
/// is a fixed partition of that storage.
#[derive(Debug, Clone, PartialEq)]
pub struct TiledMatrix {
    rows: usize,
    cols: usize,
    encoding: WeightEncoding,
    levels: Levels,
    variation_sigma: f64,
    g_pos: Vec<f64>,
    g_neg: Vec<f64>,
    prune_mask: Vec<bool>,
    dropout_mask: Vec<bool>,
    gain: Vec<f64>,
    sparsity_gain: f64,
    // g_pos - g_neg with masks applied, the values matvec actually reads
    effective: Vec<f64>,
}

impl TiledMatrix {
    /// Program normalised weights (`|w| <= 1`, row-major `rows x cols`).
    /// Readout gains start at 1.
    pub fn program<R: Rng + ?Sized>(
        weights: &[f64],
        rows: usize,
        cols: usize,
        dev: &DeviceModel,
        encoding: WeightEncoding,
        rng: &mut R,
    ) -> Result<Self> {
        dev.validate()?;
        if weights.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                expected: format!("{rows}x{cols} = {} weights", rows * cols),
                actual: format!("{}", weights.len()),
            });
        }
        if let Some(k) = weights.iter().position(|w| !(w.abs() <= 1.0)) {
            return Err(Error::WeightOutOfRange {
                row: k / cols.max(1),
                col: k % cols.max(1),
                value: weights[k],
            });
        }
        let n = rows * cols;
        let mut g_pos = vec![0.0; n];
        let mut g_neg = vec![0.0; n];
        let write = |g: f64, rng: &mut R| apply_variation(quantize(g, dev), dev, rng);
        for k in 0..n {
            let w = weights[k];
            match encoding {
                WeightEncoding::OneSided => {
                    if w > 0.0 {
                        g_pos[k] = write(w, rng);
                    } else if w < 0.0 {
                        g_neg[k] = write(-w, rng);
                    }
                }
                WeightEncoding::Balanced => {
                    g_pos[k] = write(0.5 + 0.5 * w, rng);
                    g_neg[k] = write(0.5 - 0.5 * w, rng);
                }
            }
        }
        let mut m = Self {
            rows,
            cols,
            encoding,
            levels: dev.levels,
            variation_sigma: dev.variation_sigma,
            g_pos,
            g_neg,
            prune_mask: vec![false; n],
            dropout_mask: vec![false; rows],
            gain: vec![1.0; cols],
            sparsity_gain: 1.0,
            effective: Vec::new(),
        };
        m.refresh();
        Ok(m)
    }

    /// Normalise arbitrary real weights into `[-1, 1]`, program them, and
    /// set readout gains that restore the original scale.
    pub fn program_scaled<R: Rng + ?Sized>(
        weights: &[f64],
        rows: usize,
        cols: usize,
        dev: &DeviceModel,
        opts: ProgramOptions,
        rng: &mut R,
    ) -> Result<Self> {
        if weights.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                expected: format!("{rows}x{cols} = {} weights", rows * cols),
                actual: format!("{}", weights.len()),
            });
        }
        if let Some(k) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::WeightOutOfRange {
                row: k / cols,
                col: k % cols,
                value: weights[k],
            });
        }
        let scales = column_scales(weights, rows, cols, opts.gain);
        let mut norm = Vec::with_capacity(weights.len());
        for r in 0..rows {
            for c in 0..cols {
                norm.push((weights[r * cols + c] / scales[c]).clamp(-1.0, 1.0));
            }
        }
        let mut m = Self::program(&norm, rows, cols, dev, opts.encoding, rng)?;
        m.gain = scales;
        Ok(m)
    }

    /// Rebuild from stored conductances (checkpoint path).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        rows: usize,
        cols: usize,
        encoding: WeightEncoding,
        levels: Levels,
        variation_sigma: f64,
        g_pos: Vec<f64>,
        g_neg: Vec<f64>,
        gain: Vec<f64>,
    ) -> Result<Self> {
        let n = rows * cols;
        if g_pos.len() != n || g_neg.len() != n || gain.len() != cols {
            return Err(Error::ShapeMismatch {
                expected: format!("{rows}x{cols} conductances and {cols} gains"),
                actual: format!("{}/{}/{}", g_pos.len(), g_neg.len(), gain.len()),
            });
        }
        if g_pos.iter().chain(&g_neg).any(|g| !(0.0..=1.0).contains(g)) {
            return Err(Error::Container("conductance outside [0, 1]".into()));
        }
        let mut m = Self {
            rows,
            cols,
            encoding,
            levels,
            variation_sigma,
            g_pos,
            g_neg,
            prune_mask: vec![false; n],
            dropout_mask: vec![false; rows],
            gain,
            sparsity_gain: 1.0,
            effective: Vec::new(),
        };
        m.refresh();
        Ok(m)
    }

    fn refresh(&mut self) {
        self.effective = (0..self.rows * self.cols)
            .map(|k| {
                if self.prune_mask[k] || self.dropout_mask[k / self.cols] {
                    0.0
                } else {
                    self.g_pos[k] - self.g_neg[k]
                }
            })
            .collect();
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn encoding(&self) -> WeightEncoding {
        self.encoding
    }

    pub fn levels(&self) -> Levels {
        self.levels
    }

    pub fn variation_sigma(&self) -> f64 {
        self.variation_sigma
    }

    pub fn tile_grid(&self) -> (usize, usize) {
        tile_grid(self.rows, self.cols)
    }

    /// Tiles per polarity.
    pub fn tile_count(&self) -> usize {
        let (r, c) = self.tile_grid();
        r * c
    }

    pub fn pair(&self, row: usize, col: usize) -> DifferentialWeight {
        let k = row * self.cols + col;
        if self.prune_mask[k] {
            return DifferentialWeight {
                g_pos: 0.0,
                g_neg: 0.0,
            };
        }
        DifferentialWeight {
            g_pos: self.g_pos[k],
            g_neg: self.g_neg[k],
        }
    }

    pub fn g_pos(&self) -> &[f64] {
        &self.g_pos
    }

    pub fn g_neg(&self) -> &[f64] {
        &self.g_neg
    }

    pub fn prune_mask(&self) -> &[bool] {
        &self.prune_mask
    }

    pub fn dropout_mask(&self) -> &[bool] {
        &self.dropout_mask
    }

    /// Per-column readout gain (normalisation scale).
    pub fn gain(&self) -> &[f64] {
        &self.gain
    }

    /// Extra gain applied after sparsification.
    pub fn sparsity_gain(&self) -> f64 {
        self.sparsity_gain
    }

    /// Weight actually realised at `(row, col)`, readout gain included.
    pub fn effective_weight(&self, row: usize, col: usize) -> f64 {
        self.effective[row * self.cols + col] * self.gain[col] * self.sparsity_gain
    }

    /// Full realised weight matrix, row-major.
    pub fn effective_weights(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rows * self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.push(self.effective_weight(r, c));
            }
        }
        out
    }

    /// Analog dot product `y[j] = gain[j] * sum_i x[i] (g_pos - g_neg)[i, j]`.
    ///
    /// Each tile produces a partial column sum; partials are added into `y`
    /// tile-row by tile-row in ascending order.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.cols];
        self.matvec_into(x, &mut y)?;
        Ok(y)
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.rows || y.len() != self.cols {
            return Err(Error::ShapeMismatch {
                expected: format!("input {} / output {}", self.rows, self.cols),
                actual: format!("input {} / output {}", x.len(), y.len()),
            });
        }
        y.fill(0.0);
        let mut partial = [0.0f64; TILE_COLS];
        for c0 in (0..self.cols).step_by(TILE_COLS) {
            let cw = (self.cols - c0).min(TILE_COLS);
            for r0 in (0..self.rows).step_by(TILE_ROWS) {
                let rh = (self.rows - r0).min(TILE_ROWS);
                let part = &mut partial[..cw];
                part.fill(0.0);
                for (i, &xi) in x.iter().enumerate().skip(r0).take(rh) {
                    if xi == 0.0 {
                        continue;
                    }
                    let row = &self.effective[i * self.cols + c0..i * self.cols + c0 + cw];
                    for (p, &w) in part.iter_mut().zip(row) {
                        *p += xi * w;
                    }
                }
                for (yj, p) in y[c0..c0 + cw].iter_mut().zip(part.iter()) {
                    *yj += *p;
                }
            }
        }
        for (yj, g) in y.iter_mut().zip(&self.gain) {
            *yj *= g * self.sparsity_gain;
        }
        Ok(())
    }

    /// Product with a signed input, applied as two non-negative read
    /// phases: `M x+ - M x-`.
    pub fn matvec_signed(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.iter().all(|&v| v >= 0.0) {
            return self.matvec(x);
        }
        let pos: Vec<f64> = x.iter().map(|&v| v.max(0.0)).collect();
        let neg: Vec<f64> = x.iter().map(|&v| (-v).max(0.0)).collect();
        let mut y = self.matvec(&pos)?;
        let yn = self.matvec(&neg)?;
        for (a, b) in y.iter_mut().zip(yn) {
            *a -= b;
        }
        Ok(y)
    }

    /// Disconnect exactly `round(dropout * candidate rows)` input rows and
    /// `round(prune * rows * cols)` device pairs, sampled without
    /// replacement. Existing masks are replaced.
    pub fn apply_sparsity<R: Rng + ?Sized>(&self, s: &Sparsity, rng: &mut R) -> Result<Self> {
        s.validate()?;
        let mut m = self.clone();
        let candidates = s.droppable_rows.unwrap_or(self.rows).min(self.rows);
        let n_drop = round_count(s.dropout, candidates);
        let devices = self.rows * self.cols;
        let n_prune = round_count(s.prune, devices);
        m.dropout_mask = vec![false; self.rows];
        m.prune_mask = vec![false; devices];
        for i in index::sample(rng, candidates, n_drop) {
            m.dropout_mask[i] = true;
        }
        for k in index::sample(rng, devices, n_prune) {
            m.prune_mask[k] = true;
        }
        m.sparsity_gain = if s.compensate {
            let kept_rows = if candidates == 0 {
                1.0
            } else {
                (candidates - n_drop) as f64 / candidates as f64
            };
            let kept_dev = if devices == 0 {
                1.0
            } else {
                (devices - n_prune) as f64 / devices as f64
            };
            1.0 / (kept_rows * kept_dev)
        } else {
            1.0
        };
        m.refresh();
        Ok(m)
    }

    pub fn dropped_rows(&self) -> usize {
        self.dropout_mask.iter().filter(|&&b| b).count()
    }

    pub fn pruned_devices(&self) -> usize {
        self.prune_mask.iter().filter(|&&b| b).count()
    }

    /// Serialise into the binary container.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.rows * self.cols;
        let mut out = Vec::with_capacity(48 + 16 * n + 8 * self.cols + n + self.rows);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.rows as u64).to_le_bytes());
        out.extend_from_slice(&(self.cols as u64).to_le_bytes());
        out.push(match self.encoding {
            WeightEncoding::Balanced => 0,
            WeightEncoding::OneSided => 1,
        });
        out.extend_from_slice(&self.levels.count().unwrap_or(0).to_le_bytes());
        out.extend_from_slice(&self.variation_sigma.to_le_bytes());
        out.extend_from_slice(&self.sparsity_gain.to_le_bytes());
        for v in self.gain.iter().chain(&self.g_pos).chain(&self.g_neg) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend(self.dropout_mask.iter().map(|&b| b as u8));
        out.extend(self.prune_mask.iter().map(|&b| b as u8));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Container("bad magic".into()));
        }
        let version = u16::from_le_bytes(r.array()?);
        if version != VERSION {
            return Err(Error::Container(format!("unsupported version {version}")));
        }
        let rows = usize::try_from(u64::from_le_bytes(r.array()?))
            .map_err(|_| Error::Container("row count overflow".into()))?;
        let cols = usize::try_from(u64::from_le_bytes(r.array()?))
            .map_err(|_| Error::Container("column count overflow".into()))?;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Container("dimension overflow".into()))?;
        let encoding = match r.take(1)?[0] {
            0 => WeightEncoding::Balanced,
            1 => WeightEncoding::OneSided,
            e => return Err(Error::Container(format!("unknown encoding {e}"))),
        };
        let levels = match u32::from_le_bytes(r.array()?) {
            0 => Levels::Ideal,
            1 => return Err(Error::Container("level count 1".into())),
            l => Levels::Finite(l),
        };
        let sigma = f64::from_le_bytes(r.array()?);
        let sparsity_gain = f64::from_le_bytes(r.array()?);
        let expected = n
            .checked_mul(17)
            .and_then(|v| v.checked_add(8 * cols + rows))
            .ok_or_else(|| Error::Container("dimension overflow".into()))?;
        if bytes.len() - r.pos != expected {
            return Err(Error::Container(format!(
                "payload is {} bytes, expected {expected}",
                bytes.len() - r.pos
            )));
        }
        let gain = r.f64s(cols)?;
        let g_pos = r.f64s(n)?;
        let g_neg = r.f64s(n)?;
        let dropout_mask = r.bools(rows)?;
        let prune_mask = r.bools(n)?;
        let mut m = Self::from_parts(rows, cols, encoding, levels, sigma, g_pos, g_neg, gain)?;
        m.dropout_mask = dropout_mask;
        m.prune_mask = prune_mask;
        m.sparsity_gain = sparsity_gain;
        m.refresh();
        Ok(m)
    }
}

const MAGIC: &[u8; 4] = b"MXBR";
const VERSION: u16 = 1;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Container("truncated container".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut a = [0u8; N];
        a.copy_from_slice(self.take(N)?);
        Ok(a)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    }

    fn bools(&mut self, n: usize) -> Result<Vec<bool>> {
        let raw = self.take(n)?;
        raw.iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                _ => Err(Error::Container("mask byte not 0/1".into())),
            })
            .collect()
    }
}

fn round_count(frac: f64, n: usize) -> usize {
    (libm::round(frac * n as f64) as usize).min(n)
}

/// Normalisation scales per output column (or one shared scale).
/// All-zero columns get scale 1.
pub fn column_scales(weights: &[f64], rows: usize, cols: usize, mode: GainMode) -> Vec<f64> {
    let mut scales = vec![0.0f64; cols];
    for r in 0..rows {
        for (s, w) in scales.iter_mut().zip(&weights[r * cols..(r + 1) * cols]) {
            *s = s.max(w.abs());
        }
    }
    if mode == GainMode::PerLayer {
        let m = scales.iter().copied().fold(0.0, f64::max);
        scales.fill(m);
    }
    for s in &mut scales {
        if *s == 0.0 {
            *s = 1.0;
        }
    }
    scales
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand::Rng;

    fn ideal() -> DeviceModel {
        DeviceModel::ideal()
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream(seed, 99, 0);
        (0..rows * cols).map(|_| rng.random_range(-1.0..=1.0)).collect()
    }

    fn dense_mul(w: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
        (0..cols)
            .map(|j| (0..rows).map(|i| x[i] * w[i * cols + j]).sum())
            .collect()
    }

    #[test]
    fn mnist_layer_tiles() {
        assert_eq!(tile_grid(784, 784), (4, 13));
        let w = vec![0.0; 784 * 784];
        let m = TiledMatrix::program(&w, 784, 784, &ideal(), WeightEncoding::OneSided, &mut stream(0, 0, 0))
            .unwrap();
        assert_eq!(m.tile_count(), 52);
    }

    #[test]
    fn zero_weight_one_sided_is_empty_pair() {
        let m = TiledMatrix::program(&[0.0], 1, 1, &ideal(), WeightEncoding::OneSided, &mut stream(0, 0, 0))
            .unwrap();
        assert_eq!(m.pair(0, 0), DifferentialWeight { g_pos: 0.0, g_neg: 0.0 });
        assert_eq!(m.matvec(&[1.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn negative_weight_binary_one_sided() {
        let dev = DeviceModel::with_levels(2).unwrap();
        let m = TiledMatrix::program(&[-0.6], 1, 1, &dev, WeightEncoding::OneSided, &mut stream(0, 0, 0))
            .unwrap();
        assert_eq!(m.pair(0, 0), DifferentialWeight { g_pos: 0.0, g_neg: 1.0 });
    }

    #[test]
    fn balanced_binary_keeps_sign() {
        let dev = DeviceModel::with_levels(2).unwrap();
        let m = TiledMatrix::program(&[-0.6, 0.3], 1, 2, &dev, WeightEncoding::Balanced, &mut stream(0, 0, 0))
            .unwrap();
        assert_eq!(m.pair(0, 0).weight(), -1.0);
        assert_eq!(m.pair(0, 1).weight(), 1.0);
    }

    #[test]
    fn rejects_out_of_range_weight_with_index() {
        let w = [0.0, 0.5, 1.5, 0.0];
        let err = TiledMatrix::program(&w, 2, 2, &ideal(), WeightEncoding::OneSided, &mut stream(0, 0, 0))
            .unwrap_err();
        assert_eq!(err, Error::WeightOutOfRange { row: 1, col: 0, value: 1.5 });
    }

    #[test]
    fn identity_passes_basis_vector() {
        let mut w = vec![0.0; 16];
        for i in 0..4 {
            w[i * 4 + i] = 1.0;
        }
        let m = TiledMatrix::program(&w, 4, 4, &ideal(), WeightEncoding::OneSided, &mut stream(0, 0, 0))
            .unwrap();
        assert_eq!(m.matvec(&[1.0, 0.0, 0.0, 0.0]).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn matvec_matches_dense_multiply_300x100() {
        let (rows, cols) = (300, 100);
        let w = random_matrix(rows, cols, 1);
        let mut rng = stream(2, 0, 0);
        let x: Vec<f64> = (0..rows).map(|_| rng.random()).collect();
        let want = dense_mul(&w, rows, cols, &x);
        for enc in [WeightEncoding::OneSided, WeightEncoding::Balanced] {
            let m = TiledMatrix::program(&w, rows, cols, &ideal(), enc, &mut stream(3, 0, 0)).unwrap();
            let got = m.matvec(&x).unwrap();
            let diff = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(diff < 1e-12, "{enc:?}: {diff}");
        }
    }

    #[test]
    fn scaled_programming_restores_weights() {
        let (rows, cols) = (70, 130);
        let w: Vec<f64> = random_matrix(rows, cols, 4).iter().map(|v| v * 3.7).collect();
        let x: Vec<f64> = (0..rows).map(|i| (i % 7) as f64 / 7.0).collect();
        let want = dense_mul(&w, rows, cols, &x);
        for gain in [GainMode::PerColumn, GainMode::PerLayer] {
            let opts = ProgramOptions { encoding: WeightEncoding::Balanced, gain };
            let m = TiledMatrix::program_scaled(&w, rows, cols, &ideal(), opts, &mut stream(0, 0, 0)).unwrap();
            let got = m.matvec(&x).unwrap();
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn signed_input_uses_two_phases() {
        let (rows, cols) = (20, 9);
        let w = random_matrix(rows, cols, 5);
        let x: Vec<f64> = (0..rows).map(|i| i as f64 / 10.0 - 1.0).collect();
        let m = TiledMatrix::program(&w, rows, cols, &ideal(), WeightEncoding::Balanced, &mut stream(0, 0, 0))
            .unwrap();
        let got = m.matvec_signed(&x).unwrap();
        for (a, b) in got.iter().zip(dense_mul(&w, rows, cols, &x)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn no_sparsity_leaves_matvec_unchanged() {
        let w = random_matrix(40, 30, 6);
        let m = TiledMatrix::program(&w, 40, 30, &ideal(), WeightEncoding::Balanced, &mut stream(0, 0, 0))
            .unwrap();
        let s = m.apply_sparsity(&Sparsity::none(), &mut stream(1, 0, 0)).unwrap();
        assert!(s.dropout_mask().iter().all(|b| !b));
        assert!(s.prune_mask().iter().all(|b| !b));
        let x = vec![0.5; 40];
        assert_eq!(m.matvec(&x).unwrap(), s.matvec(&x).unwrap());
    }

    #[test]
    fn dropout_masks_exact_row_count() {
        let w = vec![0.1; 784 * 4];
        let m = TiledMatrix::program(&w, 784, 4, &ideal(), WeightEncoding::OneSided, &mut stream(0, 0, 0))
            .unwrap();
        let s = m.apply_sparsity(&Sparsity::dropout(0.2), &mut stream(1, 0, 0)).unwrap();
        assert_eq!(s.dropped_rows(), 157);
        let p = m.apply_sparsity(&Sparsity::prune(0.2), &mut stream(1, 0, 0)).unwrap();
        assert_eq!(p.pruned_devices(), 627);
    }

    #[test]
    fn droppable_rows_protects_tail() {
        let w = vec![0.1; 785 * 2];
        let m = TiledMatrix::program(&w, 785, 2, &ideal(), WeightEncoding::OneSided, &mut stream(0, 0, 0))
            .unwrap();
        let sp = Sparsity {
            dropout: 0.5,
            droppable_rows: Some(784),
            ..Sparsity::none()
        };
        for seed in 0..20 {
            let s = m.apply_sparsity(&sp, &mut stream(seed, 0, 0)).unwrap();
            assert!(!s.dropout_mask()[784]);
            assert_eq!(s.dropped_rows(), 392);
        }
    }

    #[test]
    fn fully_pruned_reads_zero() {
        let w = random_matrix(10, 10, 7);
        let m = TiledMatrix::program(&w, 10, 10, &ideal(), WeightEncoding::Balanced, &mut stream(0, 0, 0))
            .unwrap();
        let mut s = m.clone();
        s.prune_mask.fill(true);
        s.refresh();
        assert_eq!(s.matvec(&[1.0; 10]).unwrap(), vec![0.0; 10]);
        assert_eq!(s.pair(3, 4), DifferentialWeight { g_pos: 0.0, g_neg: 0.0 });
    }

    #[test]
    fn dropped_rows_contribute_nothing() {
        let w = random_matrix(50, 8, 8);
        let m = TiledMatrix::program(&w, 50, 8, &ideal(), WeightEncoding::OneSided, &mut stream(0, 0, 0))
            .unwrap();
        let sp = Sparsity { dropout: 0.3, compensate: false, ..Sparsity::none() };
        let s = m.apply_sparsity(&sp, &mut stream(4, 0, 0)).unwrap();
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).fract()).collect();
        let xm: Vec<f64> = x
            .iter()
            .zip(s.dropout_mask())
            .map(|(&v, &d)| if d { 0.0 } else { v })
            .collect();
        let want = dense_mul(&w, 50, 8, &xm);
        for (a, b) in s.matvec(&x).unwrap().iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn container_round_trip() {
        let w = random_matrix(300, 70, 9);
        let dev = DeviceModel::new(Levels::Finite(16), 0.01).unwrap();
        let m = TiledMatrix::program_scaled(&w, 300, 70, &dev, ProgramOptions::default(), &mut stream(1, 0, 0))
            .unwrap()
            .apply_sparsity(&Sparsity { dropout: 0.1, prune: 0.1, ..Sparsity::none() }, &mut stream(2, 0, 0))
            .unwrap();
        let bytes = m.to_bytes();
        let back = TiledMatrix::from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert!(TiledMatrix::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(TiledMatrix::from_bytes(&bad).is_err());
    }

    #[test]
    fn programming_is_deterministic() {
        let w = random_matrix(64, 64, 10);
        let dev = DeviceModel::new(Levels::Finite(64), 0.02).unwrap();
        let a = TiledMatrix::program(&w, 64, 64, &dev, WeightEncoding::Balanced, &mut stream(5, 2, 0)).unwrap();
        let b = TiledMatrix::program(&w, 64, 64, &dev, WeightEncoding::Balanced, &mut stream(5, 2, 0)).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
    }

    proptest! {
        #[test]
        fn matvec_is_linear(
            rows in 1usize..300,
            cols in 1usize..80,
            seed in 0u64..1000,
            a in -2.0f64..2.0,
            b in -2.0f64..2.0,
        ) {
            let w = random_matrix(rows, cols, seed);
            let m = TiledMatrix::program(&w, rows, cols, &ideal(), WeightEncoding::Balanced, &mut stream(seed, 0, 0)).unwrap();
            let mut rng = stream(seed, 1, 0);
            let x1: Vec<f64> = (0..rows).map(|_| rng.random()).collect();
            let x2: Vec<f64> = (0..rows).map(|_| rng.random()).collect();
            let mix: Vec<f64> = x1.iter().zip(&x2).map(|(p, q)| a * p + b * q).collect();
            let lhs = m.matvec_signed(&mix).unwrap();
            let y1 = m.matvec(&x1).unwrap();
            let y2 = m.matvec(&x2).unwrap();
            for j in 0..cols {
                prop_assert!((lhs[j] - (a * y1[j] + b * y2[j])).abs() < 1e-9);
            }
        }

        #[test]
        fn one_sided_leaves_one_device_at_zero(w in -1.0f64..=1.0, l in 2u32..257) {
            let dev = DeviceModel::with_levels(l).unwrap();
            let m = TiledMatrix::program(&[w], 1, 1, &dev, WeightEncoding::OneSided, &mut stream(0, 0, 0)).unwrap();
            let p = m.pair(0, 0);
            prop_assert!(p.g_pos == 0.0 || p.g_neg == 0.0);
            prop_assert!((-1.0..=1.0).contains(&p.weight()));
        }
    }
}
