//! Report rows (CSV + JSON) and text tables. Every row carries the config
//! hash and seed of the run that produced it.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use memdenoise_core::classify::AccuracyReport;
use memdenoise_core::hwcost::{CostGroup, HardwareCostReport};
use memdenoise_core::metrics::QualityReport;
use serde::Serialize;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provenance<'a> {
    pub config_hash: &'a str,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualityRow {
    pub config_hash: String,
    pub seed: u64,
    pub noise: String,
    pub method: String,
    pub ssim: f64,
    pub mse: f64,
    pub psnr: Option<f64>,
    pub n: usize,
}

impl QualityRow {
    pub fn new(p: Provenance<'_>, r: &QualityReport) -> Self {
        Self {
            config_hash: p.config_hash.into(),
            seed: p.seed,
            noise: r.noise.clone(),
            method: r.method.clone(),
            ssim: r.ssim,
            mse: r.mse,
            psnr: r.psnr,
            n: r.n,
        }
    }
}

/// One point of a non-ideality sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub config_hash: String,
    pub seed: u64,
    pub parameter: String,
    pub value: String,
    pub noise: String,
    pub ssim: f64,
    pub mse: f64,
    pub psnr: Option<f64>,
    pub n: usize,
}

impl SweepRow {
    pub fn new(p: Provenance<'_>, parameter: &str, value: impl ToString, r: &QualityReport) -> Self {
        Self {
            config_hash: p.config_hash.into(),
            seed: p.seed,
            parameter: parameter.into(),
            value: value.to_string(),
            noise: r.noise.clone(),
            ssim: r.ssim,
            mse: r.mse,
            psnr: r.psnr,
            n: r.n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyRow {
    pub config_hash: String,
    pub seed: u64,
    pub condition: String,
    pub noise: String,
    pub accuracy: f64,
    pub n: usize,
}

impl AccuracyRow {
    pub fn new(p: Provenance<'_>, r: &AccuracyReport) -> Self {
        Self {
            config_hash: p.config_hash.into(),
            seed: p.seed,
            condition: r.condition.to_string(),
            noise: r.noise.map_or_else(|| "none".into(), |n| n.to_string()),
            accuracy: r.accuracy,
            n: r.n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainLogRow {
    pub config_hash: String,
    pub seed: u64,
    pub epoch: usize,
    pub rmse: f64,
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

/// Write `<dir>/<stem>.csv` and `<dir>/<stem>.json`.
pub fn write_rows<T: Serialize>(dir: &Path, stem: &str, rows: &[T]) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let csv_path = dir.join(format!("{stem}.csv"));
    fs::write(&csv_path, to_csv(rows)?).map_err(Error::io(&csv_path))?;
    let json_path = dir.join(format!("{stem}.json"));
    fs::write(&json_path, to_json(rows)?).map_err(Error::io(&json_path))
}

fn psnr_cell(p: Option<f64>) -> String {
    p.map_or_else(|| "-".into(), |v| format!("{v:.1}"))
}

pub fn quality_table(rows: &[QualityRow]) -> String {
    let mw = rows.iter().map(|r| r.method.len()).max().unwrap_or(0).max(22);
    let mut s = format!("{:<18} {:<mw$} {:>7} {:>8} {:>8} {:>6}\n", "noise", "method", "ssim", "mse", "psnr", "n");
    for r in rows {
        let _ = writeln!(
            s,
            "{:<18} {:<mw$} {:>7.3} {:>8.4} {:>8} {:>6}",
            r.noise,
            r.method,
            r.ssim,
            r.mse,
            psnr_cell(r.psnr),
            r.n
        );
    }
    s
}

pub fn sweep_table(rows: &[SweepRow]) -> String {
    let mut s = format!("{:<10} {:>8} {:<16} {:>7} {:>8} {:>8}\n", "parameter", "value", "noise", "ssim", "mse", "psnr");
    for r in rows {
        let _ = writeln!(
            s,
            "{:<10} {:>8} {:<16} {:>7.3} {:>8.4} {:>8}",
            r.parameter,
            r.value,
            r.noise,
            r.ssim,
            r.mse,
            psnr_cell(r.psnr)
        );
    }
    s
}

pub fn accuracy_table(rows: &[AccuracyRow]) -> String {
    let cw = rows.iter().map(|r| r.condition.len()).max().unwrap_or(0).max(28);
    let mut s = format!("{:<cw$} {:<18} {:>9} {:>6}\n", "condition", "noise", "accuracy", "n");
    for r in rows {
        let _ = writeln!(s, "{:<cw$} {:<18} {:>9.4} {:>6}", r.condition, r.noise, r.accuracy, r.n);
    }
    s
}

/// Engineering notation with an SI prefix, e.g. `3.2000 us`.
pub fn si(value: f64, unit: &str) -> String {
    if value == 0.0 {
        return format!("0 {unit}");
    }
    const PREFIXES: [(f64, &str); 7] = [
        (1e0, ""),
        (1e-3, "m"),
        (1e-6, "u"),
        (1e-9, "n"),
        (1e-12, "p"),
        (1e3, "k"),
        (1e6, "M"),
    ];
    let a = value.abs();
    let (scale, p) = if a >= 1e3 {
        if a >= 1e6 {
            PREFIXES[6]
        } else {
            PREFIXES[5]
        }
    } else {
        PREFIXES[..5]
            .iter()
            .copied()
            .find(|(s, _)| a >= *s)
            .unwrap_or(PREFIXES[4])
    };
    format!("{:.4} {p}{unit}", value / scale)
}

/// Area in mm^2.
fn mm2(area: f64) -> String {
    format!("{:.4} mm2", area * 1e6)
}

/// Table with the crossbar / SRAM+ADC / CMOS / total column groups.
pub fn cost_table(reports: &[HardwareCostReport]) -> String {
    let mut s = format!(
        "{:<7} {:<4} {:<9} {:>10} {:>6} | {:>11} {:>11} {:>12} | {:>11} {:>11} {:>12} | {:>11} {:>11} {:>12} | {:>11} {:>12} {:>11}\n",
        "net",
        "mode",
        "phase",
        "devices",
        "tiles",
        "xbar P",
        "xbar E",
        "xbar A",
        "sram+adc P",
        "sram+adc E",
        "sram+adc A",
        "cmos P",
        "cmos E",
        "cmos A",
        "total E",
        "total A",
        "time"
    );
    for r in reports {
        let x = r.group(CostGroup::Crossbar);
        let a = r.group(CostGroup::SramAdc);
        let c = r.group(CostGroup::Cmos);
        let _ = writeln!(
            s,
            "{:<7} {:<4} {:<9} {:>10} {:>6} | {:>11} {:>11} {:>12} | {:>11} {:>11} {:>12} | {:>11} {:>11} {:>12} | {:>11} {:>12} {:>11}",
            r.point.network.to_string(),
            r.point.mode.to_string(),
            r.point.phase.to_string(),
            format!("{}x2", r.devices),
            format!("{}x2", r.tiles),
            si(x.power, "W"),
            si(x.energy, "J"),
            mm2(x.area),
            si(a.power, "W"),
            si(a.energy, "J"),
            mm2(a.area),
            si(c.power, "W"),
            si(c.energy, "J"),
            mm2(c.area),
            si(r.total_energy(), "J"),
            mm2(r.total_area()),
            si(r.time_per_image, "s"),
        );
    }
    s
}
