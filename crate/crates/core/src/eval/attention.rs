//! First-layer weight attention profiles of trained encoders.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::models::Encoder;
use crate::nn::{ParamSet, Tensor};

/// Per-input mean absolute weight, normalized so the largest entry is 1.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionProfile {
    pub weights: Vec<f64>,
}

impl AttentionProfile {
    /// Row sums of `|W|` for a `[fan_in, fan_out]` weight, scaled to max 1.
    /// An all-zero weight gives an all-zero profile.
    pub fn from_weight(w: &Tensor) -> Result<Self> {
        if w.shape().len() != 2 {
            return Err(Error::invalid(format!(
                "weight must be a matrix, got shape {:?}",
                w.shape()
            )));
        }
        let sums: Vec<f64> = (0..w.rows()).map(|i| w.row(i).iter().map(|v| v.abs()).sum()).collect();
        let max = sums.iter().copied().fold(0.0, f64::max);
        let weights = if max > 0.0 {
            sums.iter().map(|s| s / max).collect()
        } else {
            sums
        };
        Ok(AttentionProfile { weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Mean absolute difference between two profiles of equal length.
    pub fn l1_distance(&self, other: &AttentionProfile) -> Result<f64> {
        if self.len() != other.len() || self.is_empty() {
            return Err(Error::invalid(format!(
                "profiles of length {} and {} cannot be compared",
                self.len(),
                other.len()
            )));
        }
        let s: f64 = self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b).abs())
            .sum();
        Ok(s / self.len() as f64)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["index", "w_normalized"])?;
        for (i, v) in self.weights.iter().enumerate() {
            out.write_record([i.to_string(), v.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut weights = Vec::new();
        for (expect, rec) in r.deserialize::<(usize, f64)>().enumerate() {
            let (i, v) = rec?;
            if i != expect {
                return Err(Error::format(
                    expect as u64,
                    format!("expected index {expect}, found {i}"),
                ));
            }
            weights.push(v);
        }
        Ok(AttentionProfile { weights })
    }
}

/// Attention over every input of `encoder`'s first FC layer.
pub fn weight_attention(encoder: &Encoder, params: &ParamSet) -> Result<AttentionProfile> {
    AttentionProfile::from_weight(params.value(encoder.first_layer().weight))
}
