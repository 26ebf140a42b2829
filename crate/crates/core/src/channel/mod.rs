//! Spatial multipath channel synthesis, angular-domain transform and
//! correlated nearby-UE dataset generation.

pub(crate) mod io;
mod matrix;

pub use io::{load_dataset, read_dataset, save_dataset, write_dataset, DATASET_MAGIC, DATASET_VERSION};
pub use matrix::{CMatrix, Matrix, RMatrix};

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{domain, KeyedRng, StreamRng};

/// Largest `f32` not exceeding pi/2; stored angles must survive an f32 round trip.
pub const MAX_ANGLE: f64 = 1.570_796_251_296_997;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    pub n_tx: usize,
    pub n_rx: usize,
    /// Element spacing over carrier wavelength.
    pub spacing_ratio: f64,
}

impl ArrayGeometry {
    pub fn new(n_tx: usize, n_rx: usize) -> Self {
        ArrayGeometry {
            n_tx,
            n_rx,
            spacing_ratio: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_tx == 0 || self.n_rx == 0 {
            return Err(Error::invalid("antenna counts must be positive"));
        }
        if !(self.spacing_ratio > 0.0 && self.spacing_ratio.is_finite()) {
            return Err(Error::invalid("spacing_ratio must be positive"));
        }
        Ok(())
    }

    /// Real dimension of one CSI plane, `N_r * N_t`.
    pub fn dims(&self) -> usize {
        self.n_tx * self.n_rx
    }
}

/// Multipath parameters of one UE's channel.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub gains: Vec<Complex64>,
    /// Angles of departure at the BS, radians.
    pub aod: Vec<f64>,
    /// Angles of arrival at the UE, radians.
    pub aoa: Vec<f64>,
}

impl PathSet {
    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.gains.is_empty() {
            return Err(Error::invalid("path set is empty"));
        }
        if self.aod.len() != self.gains.len() || self.aoa.len() != self.gains.len() {
            return Err(Error::invalid("path set lists have different lengths"));
        }
        if self
            .aod
            .iter()
            .chain(&self.aoa)
            .any(|a| a.is_nan() || a.abs() > FRAC_PI_2)
        {
            return Err(Error::invalid("path angle outside [-pi/2, pi/2]"));
        }
        Ok(())
    }

    /// Elementwise `self - base`.
    pub fn delta_from(&self, base: &PathSet) -> PathSet {
        PathSet {
            gains: self.gains.iter().zip(&base.gains).map(|(a, b)| a - b).collect(),
            aod: self.aod.iter().zip(&base.aod).map(|(a, b)| a - b).collect(),
            aoa: self.aoa.iter().zip(&base.aoa).map(|(a, b)| a - b).collect(),
        }
    }

    /// Elementwise `self + delta`.
    pub fn offset_by(&self, delta: &PathSet) -> PathSet {
        PathSet {
            gains: self.gains.iter().zip(&delta.gains).map(|(a, b)| a + b).collect(),
            aod: self.aod.iter().zip(&delta.aod).map(|(a, b)| a + b).collect(),
            aoa: self.aoa.iter().zip(&delta.aoa).map(|(a, b)| a + b).collect(),
        }
    }

    fn round_to_f32(&self) -> PathSet {
        let r = |x: f64| x as f32 as f64;
        let ra = |x: f64| r(x).clamp(-MAX_ANGLE, MAX_ANGLE);
        PathSet {
            gains: self.gains.iter().map(|g| Complex64::new(r(g.re), r(g.im))).collect(),
            aod: self.aod.iter().copied().map(ra).collect(),
            aoa: self.aoa.iter().copied().map(ra).collect(),
        }
    }
}

/// One UE's channel in both spatial and angular domains.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularChannelSample {
    pub spatial: CMatrix,
    pub angular: CMatrix,
    /// `|angular| / mag_scale`.
    pub magnitude: RMatrix,
    /// `arg(angular)` in `(-pi, pi]`.
    pub phase: RMatrix,
    pub mag_scale: f64,
}

impl AngularChannelSample {
    pub(crate) fn apply_scale(&mut self, mag_scale: f64) {
        self.mag_scale = mag_scale;
        self.magnitude = self.angular.map(|z| z.norm() / mag_scale);
    }
}

/// Uniform random perturbation applied to a nearby UE's path parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbSpec {
    pub angle_jitter_max: f64,
    pub gain_jitter_std: f64,
}

impl Default for PerturbSpec {
    fn default() -> Self {
        PerturbSpec {
            angle_jitter_max: 0.035,
            gain_jitter_std: 0.1,
        }
    }
}

impl PerturbSpec {
    pub const NONE: PerturbSpec = PerturbSpec {
        angle_jitter_max: 0.0,
        gain_jitter_std: 0.0,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct UeGroup {
    pub users: Vec<AngularChannelSample>,
    pub base_paths: PathSet,
    /// Per-user offsets from `base_paths`; entry 0 is all zeros.
    pub perturbations: Vec<PathSet>,
}

impl UeGroup {
    pub fn user_paths(&self, user: usize) -> PathSet {
        self.base_paths.offset_by(&self.perturbations[user])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Shuffled 70/10/20 partition of `0..n`.
    pub fn shuffled(n: usize, rng: &mut StreamRng) -> Split {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            idx.swap(i, j);
        }
        let n_train = (n * 70 / 100).max(1.min(n));
        let n_val = (n * 10 / 100).min(n - n_train);
        let test = idx.split_off(n_train + n_val);
        let val = idx.split_off(n_train);
        Split { train: idx, val, test }
    }

    pub fn is_partition_of(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if i >= n || seen[i] {
                return false;
            }
            seen[i] = true;
        }
        seen.into_iter().all(|s| s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitKind {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDataset {
    pub groups: Vec<UeGroup>,
    pub geometry: ArrayGeometry,
    pub n_paths: usize,
    pub split: Split,
    pub seed: u64,
    pub mag_scale: f64,
}

impl ChannelDataset {
    pub fn users_per_group(&self) -> usize {
        self.groups.first().map_or(0, |g| g.users.len())
    }

    pub fn indices(&self, kind: SplitKind) -> &[usize] {
        match kind {
            SplitKind::Train => &self.split.train,
            SplitKind::Val => &self.split.val,
            SplitKind::Test => &self.split.test,
        }
    }

    /// Keep only the first `users` users of every group.
    pub fn truncate_users(&self, users: usize) -> Result<ChannelDataset> {
        if users == 0 || users > self.users_per_group() {
            return Err(Error::invalid(format!(
                "cannot keep {users} of {} users",
                self.users_per_group()
            )));
        }
        let mut out = self.clone();
        for g in &mut out.groups {
            g.users.truncate(users);
            g.perturbations.truncate(users);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub geometry: ArrayGeometry,
    pub n_paths: usize,
    pub n_groups: usize,
    pub users_per_group: usize,
    pub jitter: PerturbSpec,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            geometry: ArrayGeometry::new(32, 1),
            n_paths: 3,
            n_groups: 5000,
            users_per_group: 2,
            jitter: PerturbSpec::default(),
            seed: 1,
        }
    }
}

/// ULA response: element `m` is `exp(-j 2 pi s m sin(angle)) / sqrt(n)`.
pub fn steering_vector(angle: f64, n: usize, spacing_ratio: f64) -> Result<Vec<Complex64>> {
    if n == 0 {
        return Err(Error::invalid("steering vector needs at least one antenna"));
    }
    let norm = 1.0 / (n as f64).sqrt();
    let k = -2.0 * PI * spacing_ratio * angle.sin();
    Ok((0..n).map(|m| Complex64::from_polar(norm, k * m as f64)).collect())
}

/// `sqrt(N_r N_t / N_c) * sum_l g_l a_r(aoa_l) a_t(aod_l)^H`.
pub fn synth_channel(paths: &PathSet, geom: &ArrayGeometry) -> Result<CMatrix> {
    paths.validate()?;
    geom.validate()?;
    let scale = ((geom.n_rx * geom.n_tx) as f64 / paths.len() as f64).sqrt();
    let mut h = CMatrix::zeros(geom.n_rx, geom.n_tx);
    for l in 0..paths.len() {
        let ar = steering_vector(paths.aoa[l], geom.n_rx, geom.spacing_ratio)?;
        let at = steering_vector(paths.aod[l], geom.n_tx, geom.spacing_ratio)?;
        let g = paths.gains[l] * scale;
        for (i, ari) in ar.iter().enumerate() {
            let row = g * ari;
            for (m, atm) in at.iter().enumerate() {
                h[(i, m)] += row * atm.conj();
            }
        }
    }
    Ok(h)
}

/// Unitary DFT matrix: `F[k][n] = exp(-j 2 pi k n / N) / sqrt(N)`.
pub fn dft_matrix(n: usize) -> CMatrix {
    let norm = 1.0 / (n as f64).sqrt();
    CMatrix::from_fn(n, n, |k, m| {
        // reduce k*m mod n first so large products stay exact
        let km = (k * m) % n;
        Complex64::from_polar(norm, -2.0 * PI * km as f64 / n as f64)
    })
}

fn wrap_phase(z: Complex64) -> f64 {
    let p = z.arg();
    if p <= -PI {
        PI
    } else {
        p
    }
}

/// `F_r * spatial * F_t`; magnitude is left unnormalized (`mag_scale = 1`).
pub fn to_angular(spatial: &CMatrix, geom: &ArrayGeometry) -> Result<AngularChannelSample> {
    geom.validate()?;
    if spatial.shape() != (geom.n_rx, geom.n_tx) {
        return Err(Error::invalid(format!(
            "spatial matrix is {:?}, geometry expects {}x{}",
            spatial.shape(),
            geom.n_rx,
            geom.n_tx
        )));
    }
    let angular = dft_matrix(geom.n_rx).matmul(spatial).matmul(&dft_matrix(geom.n_tx));
    Ok(AngularChannelSample {
        spatial: spatial.clone(),
        magnitude: angular.map(|z| z.norm()),
        phase: angular.map(|&z| wrap_phase(z)),
        angular,
        mag_scale: 1.0,
    })
}

fn standard_complex_normal(rng: &mut StreamRng, std: f64) -> Complex64 {
    let s = std / 2f64.sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

pub fn perturb_paths(base: &PathSet, jitter: &PerturbSpec, rng: &mut StreamRng) -> PathSet {
    let mut jitter_angle = |a: f64| {
        let d = if jitter.angle_jitter_max > 0.0 {
            rng.random_range(-jitter.angle_jitter_max..=jitter.angle_jitter_max)
        } else {
            0.0
        };
        (a + d).clamp(-FRAC_PI_2, FRAC_PI_2)
    };
    let aod = base.aod.iter().map(|&a| jitter_angle(a)).collect();
    let aoa = base.aoa.iter().map(|&a| jitter_angle(a)).collect();
    let gains = base
        .gains
        .iter()
        .map(|&g| {
            if jitter.gain_jitter_std > 0.0 {
                g + standard_complex_normal(rng, jitter.gain_jitter_std)
            } else {
                g
            }
        })
        .collect();
    PathSet { gains, aod, aoa }
}

fn sample_base_paths(n_paths: usize, rng: &mut StreamRng) -> PathSet {
    let mut angle = || rng.random_range(-FRAC_PI_2..=FRAC_PI_2);
    let aod = (0..n_paths).map(|_| angle()).collect();
    let aoa = (0..n_paths).map(|_| angle()).collect();
    let gains = (0..n_paths).map(|_| standard_complex_normal(rng, 1.0)).collect();
    PathSet { gains, aod, aoa }
}

/// Spatial matrix rounded to f32 storage precision.
pub(crate) fn stored_spatial(paths: &PathSet, geom: &ArrayGeometry) -> Result<CMatrix> {
    Ok(synth_channel(paths, geom)?.map(|z| Complex64::new(z.re as f32 as f64, z.im as f32 as f64)))
}

fn generate_group(cfg: &DatasetConfig, root: KeyedRng, g: usize) -> Result<UeGroup> {
    let group_rng = root.child(g as u64);
    let base = sample_base_paths(cfg.n_paths, &mut group_rng.child(0).stream()).round_to_f32();
    let mut users = Vec::with_capacity(cfg.users_per_group);
    let mut perturbations = Vec::with_capacity(cfg.users_per_group);
    for k in 0..cfg.users_per_group {
        let paths = if k == 0 {
            base.clone()
        } else {
            perturb_paths(&base, &cfg.jitter, &mut group_rng.child(k as u64 + 1).stream()).round_to_f32()
        };
        let spatial = stored_spatial(&paths, &cfg.geometry)?;
        users.push(to_angular(&spatial, &cfg.geometry)?);
        perturbations.push(paths.delta_from(&base));
    }
    Ok(UeGroup {
        users,
        base_paths: base,
        perturbations,
    })
}

/// Largest angular magnitude over every user in the training split.
pub(crate) fn training_mag_scale(groups: &[UeGroup], train: &[usize]) -> f64 {
    let m = train
        .iter()
        .flat_map(|&g| groups[g].users.iter())
        .flat_map(|u| u.angular.as_slice().iter().map(|z| z.norm()))
        .fold(0.0f64, f64::max);
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

pub(crate) fn finalize(groups: &mut [UeGroup], mag_scale: f64) {
    for g in groups {
        for u in &mut g.users {
            u.apply_scale(mag_scale);
        }
    }
}

pub fn generate_dataset(cfg: &DatasetConfig) -> Result<ChannelDataset> {
    cfg.geometry.validate()?;
    if cfg.n_groups == 0 {
        return Err(Error::invalid("n_groups must be at least 1"));
    }
    if cfg.users_per_group == 0 {
        return Err(Error::invalid("users_per_group must be at least 1"));
    }
    if cfg.n_paths == 0 {
        return Err(Error::invalid("n_paths must be at least 1"));
    }
    if cfg.jitter.angle_jitter_max < 0.0 || cfg.jitter.gain_jitter_std < 0.0 {
        return Err(Error::invalid("jitter parameters must be non-negative"));
    }
    let root = KeyedRng::new(cfg.seed).child(domain::DATASET);
    let mut groups = (0..cfg.n_groups)
        .into_par_iter()
        .map(|g| generate_group(cfg, root, g))
        .collect::<Result<Vec<_>>>()?;
    let split = Split::shuffled(cfg.n_groups, &mut KeyedRng::new(cfg.seed).child(domain::SPLIT).stream());
    let mag_scale = training_mag_scale(&groups, &split.train);
    finalize(&mut groups, mag_scale);
    Ok(ChannelDataset {
        groups,
        geometry: cfg.geometry,
        n_paths: cfg.n_paths,
        split,
        seed: cfg.seed,
        mag_scale,
    })
}
