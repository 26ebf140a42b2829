//! NMSE metrics and the CSV report schema.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::CMatrix;
use crate::error::{Error, Result};
use crate::nn::Tensor;

/// dB value reported for a perfect reconstruction.
pub const NMSE_FLOOR_DB: f64 = -300.0;

pub fn to_db(linear: f64) -> f64 {
    if linear <= 0.0 {
        return NMSE_FLOOR_DB;
    }
    (10.0 * linear.log10()).max(NMSE_FLOOR_DB)
}

/// Mean of per-sample error ratios.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nmse {
    pub linear: f64,
    pub samples: usize,
    /// Samples skipped because the reference had zero norm.
    pub excluded: usize,
}

impl Nmse {
    pub fn db(&self) -> f64 {
        to_db(self.linear)
    }

    fn from_ratios(ratios: impl Iterator<Item = Option<f64>>) -> Nmse {
        let (mut sum, mut used, mut excluded) = (0.0, 0, 0);
        for r in ratios {
            match r {
                Some(v) => {
                    sum += v;
                    used += 1;
                }
                None => excluded += 1,
            }
        }
        if excluded > 0 {
            log::warn!("nmse: {excluded} zero-norm samples excluded");
        }
        Nmse {
            linear: if used > 0 { sum / used as f64 } else { 0.0 },
            samples: used,
            excluded,
        }
    }

    /// Pool several results, weighting by sample count.
    pub fn pooled(parts: &[Nmse]) -> Nmse {
        let n: usize = parts.iter().map(|p| p.samples).sum();
        let sum: f64 = parts.iter().map(|p| p.linear * p.samples as f64).sum();
        Nmse {
            linear: if n > 0 { sum / n as f64 } else { 0.0 },
            samples: n,
            excluded: parts.iter().map(|p| p.excluded).sum(),
        }
    }
}

fn same_shape(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::invalid(format!(
            "shapes differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// NMSE between real planes, one sample per row.
pub fn nmse(h: &Tensor, h_hat: &Tensor) -> Result<Nmse> {
    same_shape(h, h_hat)?;
    Ok(Nmse::from_ratios((0..h.rows()).map(|r| {
        let (a, b) = (h.row(r), h_hat.row(r));
        let norm: f64 = a.iter().map(|v| v * v).sum();
        let err: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        (norm > 0.0).then(|| err / norm)
    })))
}

pub fn nmse_complex(h: &[CMatrix], h_hat: &[CMatrix]) -> Result<Nmse> {
    if h.len() != h_hat.len() {
        return Err(Error::invalid("sample counts differ"));
    }
    for (a, b) in h.iter().zip(h_hat) {
        if a.shape() != b.shape() {
            return Err(Error::invalid(format!(
                "shapes differ: {:?} vs {:?}",
                a.shape(),
                b.shape()
            )));
        }
    }
    Ok(Nmse::from_ratios(h.iter().zip(h_hat).map(|(a, b)| {
        let norm = a.frobenius_sq();
        let err: f64 = a
            .as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x - y).norm_sqr())
            .sum();
        (norm > 0.0).then(|| err / norm)
    })))
}

/// Magnitude-weighted phase error `||(phase - phase_hat) * |H| ||^2 / ||H||^2`
/// per sample. Any common scale on `magnitude` cancels.
pub fn phase_nmse(phase: &Tensor, phase_hat: &Tensor, magnitude: &Tensor) -> Result<Nmse> {
    same_shape(phase, phase_hat)?;
    same_shape(phase, magnitude)?;
    Ok(Nmse::from_ratios((0..phase.rows()).map(|r| {
        let (p, q, m) = (phase.row(r), phase_hat.row(r), magnitude.row(r));
        let norm: f64 = m.iter().map(|v| v * v).sum();
        let err: f64 = (0..p.len()).map(|i| (m[i] * (p[i] - q[i])).powi(2)).sum();
        (norm > 0.0).then(|| err / norm)
    })))
}

/// One row of an experiment CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub experiment: String,
    pub model: String,
    pub bpd: f64,
    pub nmse_db: f64,
    pub phase_nmse_db: Option<f64>,
    pub ber: Option<f64>,
    pub params: usize,
    pub seed: u64,
    pub seconds: f64,
}

pub const REPORT_HEADER: [&str; 9] = [
    "experiment",
    "model",
    "bpd",
    "nmse_db",
    "phase_nmse_db",
    "ber",
    "params",
    "seed",
    "seconds",
];

pub fn write_reports<W: Write>(reports: &[MetricsReport], w: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(REPORT_HEADER)?;
    for r in reports {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_reports(reports: &[MetricsReport], path: impl AsRef<Path>) -> Result<()> {
    write_reports(reports, std::fs::File::create(path)?)
}

pub fn read_reports(path: impl AsRef<Path>) -> Result<Vec<MetricsReport>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<MetricsReport>, _>>()?;
    Ok(rows)
}

/// Mean `nmse_db` per model tag, in first-seen order.
pub fn mean_by_model(reports: &[MetricsReport]) -> Vec<(String, f64)> {
    let mut acc: indexmap::IndexMap<&str, (f64, usize)> = indexmap::IndexMap::new();
    for r in reports {
        let e = acc.entry(r.model.as_str()).or_insert((0.0, 0));
        e.0 += r.nmse_db;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(k, (s, n))| (k.to_string(), s / n as f64))
        .collect()
}
