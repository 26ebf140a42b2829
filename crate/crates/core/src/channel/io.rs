//! Binary dataset container (`COCD`, little-endian).

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;

use super::{finalize, to_angular, ArrayGeometry, CMatrix, ChannelDataset, PathSet, Split, UeGroup};
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"COCD";
pub const DATASET_VERSION: u16 = 1;

pub fn write_dataset<W: Write>(ds: &ChannelDataset, mut w: W) -> Result<()> {
    let k = ds.users_per_group();
    let mut buf = Vec::new();
    buf.extend_from_slice(DATASET_MAGIC);
    buf.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    for v in [ds.groups.len(), k, ds.geometry.n_rx, ds.geometry.n_tx, ds.n_paths] {
        buf.extend_from_slice(&u32_of(v)?.to_le_bytes());
    }
    buf.extend_from_slice(&ds.mag_scale.to_le_bytes());
    buf.extend_from_slice(&ds.seed.to_le_bytes());
    for g in &ds.groups {
        if g.users.len() != k {
            return Err(Error::invalid("groups have differing user counts"));
        }
        for (u, sample) in g.users.iter().enumerate() {
            for z in sample.spatial.as_slice() {
                buf.extend_from_slice(&(z.re as f32).to_le_bytes());
                buf.extend_from_slice(&(z.im as f32).to_le_bytes());
            }
            let paths = g.user_paths(u);
            for l in 0..paths.len() {
                for v in [paths.gains[l].re, paths.gains[l].im, paths.aoa[l], paths.aod[l]] {
                    buf.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
        }
    }
    for list in [&ds.split.train, &ds.split.val, &ds.split.test] {
        buf.extend_from_slice(&u32_of(list.len())?.to_le_bytes());
        for &i in list.iter() {
            buf.extend_from_slice(&u32_of(i)?.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn save_dataset(ds: &ChannelDataset, path: impl AsRef<Path>) -> Result<()> {
    let f = fs::File::create(path)?;
    write_dataset(ds, std::io::BufWriter::new(f))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<ChannelDataset> {
    read_dataset(&fs::read(path)?)
}

fn u32_of(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::invalid(format!("{v} does not fit in u32")))
}

pub(crate) struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Cursor { bytes, pos: 0 }
    }

    pub(crate) fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                self.pos as u64,
                format!("truncated while reading {what} ({n} bytes needed)"),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub(crate) fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

pub fn read_dataset(bytes: &[u8]) -> Result<ChannelDataset> {
    let mut c = Cursor::new(bytes);
    let magic = c.take(4, "magic")?;
    if magic != DATASET_MAGIC {
        return Err(Error::format(0, format!("bad magic {magic:?}, expected \"COCD\"")));
    }
    let version = c.u16("version")?;
    if version > DATASET_VERSION {
        return Err(Error::UnsupportedVersion {
            what: "dataset",
            found: version,
            supported: DATASET_VERSION,
        });
    }
    if version == 0 {
        return Err(Error::format(4, "version 0 is not valid"));
    }
    let n_groups = c.u32("n_groups")? as usize;
    let k = c.u32("users_per_group")? as usize;
    let n_rx = c.u32("n_rx")? as usize;
    let n_tx = c.u32("n_tx")? as usize;
    let n_paths = c.u32("n_paths")? as usize;
    let header_end = c.offset();
    if n_groups == 0 || k == 0 || n_rx == 0 || n_tx == 0 || n_paths == 0 {
        return Err(Error::format(header_end, "header counts must be positive"));
    }
    let mag_scale = c.f64("mag_scale")?;
    if !(mag_scale > 0.0 && mag_scale.is_finite()) {
        return Err(Error::format(header_end, "mag_scale must be positive and finite"));
    }
    let seed = c.u64("seed")?;

    // spacing is not stored; samples are recomputed from the stored spatial matrices
    let geometry = ArrayGeometry::new(n_tx, n_rx);
    let per_user = 8 * n_rx * n_tx + 16 * n_paths;
    let body = n_groups
        .checked_mul(k)
        .and_then(|n| n.checked_mul(per_user))
        .ok_or_else(|| Error::format(c.offset(), "header sizes overflow"))?;
    if c.remaining() < body {
        return Err(Error::format(
            c.offset(),
            format!("truncated: {} sample bytes declared, {} present", body, c.remaining()),
        ));
    }

    let mut groups = Vec::with_capacity(n_groups);
    for _ in 0..n_groups {
        let mut users = Vec::with_capacity(k);
        let mut paths = Vec::with_capacity(k);
        for _ in 0..k {
            let mut data = Vec::with_capacity(n_rx * n_tx);
            for _ in 0..n_rx * n_tx {
                let re = c.f32("spatial re")? as f64;
                let im = c.f32("spatial im")? as f64;
                data.push(Complex64::new(re, im));
            }
            let spatial = CMatrix::from_vec(n_rx, n_tx, data);
            let at = c.offset();
            let mut p = PathSet {
                gains: Vec::with_capacity(n_paths),
                aod: Vec::with_capacity(n_paths),
                aoa: Vec::with_capacity(n_paths),
            };
            for _ in 0..n_paths {
                let re = c.f32("gain re")? as f64;
                let im = c.f32("gain im")? as f64;
                p.gains.push(Complex64::new(re, im));
                p.aoa.push(c.f32("aoa")? as f64);
                p.aod.push(c.f32("aod")? as f64);
            }
            p.validate().map_err(|e| Error::format(at, e.to_string()))?;
            users.push(to_angular(&spatial, &geometry)?);
            paths.push(p);
        }
        let base = paths[0].clone();
        let perturbations = paths.iter().map(|p| p.delta_from(&base)).collect();
        groups.push(UeGroup {
            users,
            base_paths: base,
            perturbations,
        });
    }

    let mut lists = Vec::with_capacity(3);
    for name in ["train split", "val split", "test split"] {
        let n = c.u32(name)? as usize;
        let mut v = Vec::with_capacity(n.min(c.remaining() / 4));
        for _ in 0..n {
            v.push(c.u32(name)? as usize);
        }
        lists.push(v);
    }
    if c.remaining() != 0 {
        return Err(Error::format(c.offset(), "trailing bytes after split lists"));
    }
    let test = lists.pop().unwrap();
    let val = lists.pop().unwrap();
    let train = lists.pop().unwrap();
    let split = Split { train, val, test };
    if !split.is_partition_of(n_groups) {
        return Err(Error::format(c.offset(), "split lists do not partition the groups"));
    }

    finalize(&mut groups, mag_scale);
    Ok(ChannelDataset {
        groups,
        geometry,
        n_paths,
        split,
        seed,
        mag_scale,
    })
}
