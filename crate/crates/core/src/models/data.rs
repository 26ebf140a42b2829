//! Flattened per-user magnitude and phase planes ready for batching.

use crate::channel::{ChannelDataset, SplitKind};
use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Samples in one split, each holding `users` planes of `n_rx * n_tx`
/// entries stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneSet {
    pub users: usize,
    pub n_rx: usize,
    pub n_tx: usize,
    pub mag_scale: f64,
    /// `mag[k]` holds every sample of user `k` back to back.
    mag: Vec<Vec<f64>>,
    phase: Vec<Vec<f64>>,
    samples: usize,
}

impl PlaneSet {
    pub fn from_dataset(ds: &ChannelDataset, kind: SplitKind) -> Self {
        Self::from_groups(ds, ds.indices(kind))
    }

    pub fn from_groups(ds: &ChannelDataset, groups: &[usize]) -> Self {
        let users = ds.users_per_group();
        let (n_rx, n_tx) = (ds.geometry.n_rx, ds.geometry.n_tx);
        let mut mag = vec![Vec::with_capacity(groups.len() * n_rx * n_tx); users];
        let mut phase = mag.clone();
        for &g in groups {
            for (k, u) in ds.groups[g].users.iter().enumerate() {
                mag[k].extend_from_slice(u.magnitude.as_slice());
                phase[k].extend_from_slice(u.phase.as_slice());
            }
        }
        PlaneSet {
            users,
            n_rx,
            n_tx,
            mag_scale: ds.mag_scale,
            mag,
            phase,
            samples: groups.len(),
        }
    }

    /// Build directly from per-user flattened planes.
    pub fn from_planes(
        n_rx: usize,
        n_tx: usize,
        mag_scale: f64,
        mag: Vec<Vec<f64>>,
        phase: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let dims = n_rx * n_tx;
        if dims == 0 || mag.is_empty() || mag.len() != phase.len() {
            return Err(Error::invalid(
                "plane set needs matching, non-empty magnitude and phase planes",
            ));
        }
        let samples = mag[0].len() / dims;
        for (m, p) in mag.iter().zip(&phase) {
            if m.len() != samples * dims || p.len() != samples * dims {
                return Err(Error::invalid("every user needs the same number of whole planes"));
            }
        }
        Ok(PlaneSet {
            users: mag.len(),
            n_rx,
            n_tx,
            mag_scale,
            mag,
            phase,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples
    }

    pub fn is_empty(&self) -> bool {
        self.samples == 0
    }

    pub fn dims(&self) -> usize {
        self.n_rx * self.n_tx
    }

    /// Normalized magnitude plane of `user` in `sample`.
    pub fn magnitude(&self, user: usize, sample: usize) -> &[f64] {
        let d = self.dims();
        &self.mag[user][sample * d..(sample + 1) * d]
    }

    pub fn phase(&self, user: usize, sample: usize) -> &[f64] {
        let d = self.dims();
        &self.phase[user][sample * d..(sample + 1) * d]
    }

    fn gather(&self, src: &[f64], rows: &[usize]) -> Tensor {
        let d = self.dims();
        let mut out = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            out.extend_from_slice(&src[r * d..(r + 1) * d]);
        }
        Tensor::matrix(rows.len(), d, out)
    }

    pub fn gather_magnitude(&self, user: usize, rows: &[usize]) -> Tensor {
        self.gather(&self.mag[user], rows)
    }

    pub fn gather_phase(&self, user: usize, rows: &[usize]) -> Tensor {
        self.gather(&self.phase[user], rows)
    }

    /// The first `n` samples.
    pub fn take(&self, n: usize) -> Result<PlaneSet> {
        if n > self.samples {
            return Err(Error::invalid(format!(
                "requested {n} samples from a set of {}",
                self.samples
            )));
        }
        let d = self.dims();
        Ok(PlaneSet {
            mag: self.mag.iter().map(|m| m[..n * d].to_vec()).collect(),
            phase: self.phase.iter().map(|p| p[..n * d].to_vec()).collect(),
            samples: n,
            ..self.clone_header()
        })
    }

    fn clone_header(&self) -> PlaneSet {
        PlaneSet {
            users: self.users,
            n_rx: self.n_rx,
            n_tx: self.n_tx,
            mag_scale: self.mag_scale,
            mag: Vec::new(),
            phase: Vec::new(),
            samples: 0,
        }
    }

    /// Per-entry mean normalized magnitude of `user` over all samples.
    pub fn mean_magnitude(&self, user: usize) -> Vec<f64> {
        let d = self.dims();
        let mut m = vec![0.0; d];
        for s in 0..self.samples {
            m.iter_mut().zip(self.magnitude(user, s)).for_each(|(a, b)| *a += b);
        }
        let n = self.samples.max(1) as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }
}
