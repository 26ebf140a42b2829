//! Binary checkpoint container (`COCW`, little-endian, f32 payloads).

use std::fs;
use std::io::Write;
use std::path::Path;

use super::adam::AdamState;
use super::params::ParamSet;
use super::tensor::Tensor;
use crate::channel::io::Cursor;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"COCW";
pub const CHECKPOINT_VERSION: u16 = 1;

pub const META_TOPOLOGY: &str = "meta.topology";
const ADAM_STEP: &str = "adam.step";
const ADAM_HYPER: &str = "adam.hyper";
const ADAM_M: &str = "adam.m/";
const ADAM_V: &str = "adam.v/";

/// Named tensors as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_params(params: &ParamSet, adam: Option<&AdamState>, topology: Option<&str>) -> Self {
        let mut tensors = Vec::new();
        if let Some(meta) = topology {
            let bytes: Vec<f64> = meta.bytes().map(f64::from).collect();
            if !bytes.is_empty() {
                tensors.push((
                    META_TOPOLOGY.to_string(),
                    Tensor::new(vec![bytes.len()], bytes).unwrap(),
                ));
            }
        }
        for (name, t, _) in params.iter() {
            tensors.push((name.to_string(), t.clone()));
        }
        if let Some(s) = adam {
            tensors.push((ADAM_STEP.to_string(), Tensor::scalar(s.t as f64)));
            tensors.push((
                ADAM_HYPER.to_string(),
                Tensor::new(vec![4], vec![s.lr, s.beta1, s.beta2, s.eps]).unwrap(),
            ));
            for id in params.trainable_ids() {
                if let Some((m, v)) = s.moments(id) {
                    let shape = params.value(id).shape().to_vec();
                    let name = params.name(id);
                    tensors.push((
                        format!("{ADAM_M}{name}"),
                        Tensor::new(shape.clone(), m.to_vec()).unwrap(),
                    ));
                    tensors.push((format!("{ADAM_V}{name}"), Tensor::new(shape, v.to_vec()).unwrap()));
                }
            }
        }
        Checkpoint { tensors }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn topology(&self) -> Option<String> {
        self.get(META_TOPOLOGY)
            .map(|t| t.data().iter().map(|&b| b as u8 as char).collect())
    }

    /// Entries that belong to the parameter set (no metadata, no optimizer).
    pub fn param_entries(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors
            .iter()
            .filter(|(n, _)| !n.starts_with("meta.") && !n.starts_with("adam."))
            .map(|(n, t)| (n.as_str(), t))
    }

    /// Load every stored parameter into `params`; the two name sets must match.
    pub fn restore(&self, params: &mut ParamSet) -> Result<()> {
        let stored = self.param_entries().count();
        if stored != params.len() {
            return Err(Error::contract(format!(
                "checkpoint holds {stored} parameters, model has {}",
                params.len()
            )));
        }
        params.assign(self.param_entries())
    }

    pub fn restore_adam(&self, params: &ParamSet) -> Result<Option<AdamState>> {
        let (Some(step), Some(hyper)) = (self.get(ADAM_STEP), self.get(ADAM_HYPER)) else {
            return Ok(None);
        };
        let h = hyper.data();
        let mut s = AdamState::new(h[0]).attach(params);
        s.beta1 = h[1];
        s.beta2 = h[2];
        s.eps = h[3];
        s.t = step.data()[0] as u64;
        for id in params.trainable_ids() {
            let name = params.name(id);
            let m = self.get(&format!("{ADAM_M}{name}"));
            let v = self.get(&format!("{ADAM_V}{name}"));
            if let (Some(m), Some(v)) = (m, v) {
                s.set_moments(id, m.data().to_vec(), v.data().to_vec())?;
            }
        }
        Ok(Some(s))
    }
}

pub fn write_checkpoint<W: Write>(ck: &Checkpoint, mut w: W) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let count = u32::try_from(ck.tensors.len()).map_err(|_| Error::invalid("too many tensors"))?;
    buf.extend_from_slice(&count.to_le_bytes());
    for (name, t) in &ck.tensors {
        let len = u16::try_from(name.len()).map_err(|_| Error::invalid(format!("tensor name too long: {name}")))?;
        buf.extend_from_slice(&len.to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        let rank = u8::try_from(t.shape().len()).map_err(|_| Error::invalid("rank above 255"))?;
        buf.push(rank);
        for &d in t.shape() {
            let d = u32::try_from(d).map_err(|_| Error::invalid("dimension above u32"))?;
            buf.extend_from_slice(&d.to_le_bytes());
        }
        for &v in t.data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut c = Cursor::new(bytes);
    let magic = c.take(4, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::format(0, "bad magic, expected \"COCW\""));
    }
    let version = c.u16("version")?;
    if version > CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion {
            what: "checkpoint",
            found: version,
            supported: CHECKPOINT_VERSION,
        });
    }
    let count = c.u32("tensor count")? as usize;
    let mut tensors = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let at = c.offset();
        let len = c.u16("name length")? as usize;
        let name = std::str::from_utf8(c.take(len, "name")?)
            .map_err(|_| Error::format(at, "tensor name is not UTF-8"))?
            .to_string();
        let rank = c.u8("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(c.u32("dimension")? as usize);
        }
        let n: usize = shape.iter().product();
        if n.saturating_mul(4) > c.remaining() {
            return Err(Error::format(c.offset(), format!("truncated values of {name:?}")));
        }
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(c.f32("value")? as f64);
        }
        let t = Tensor::new(shape, data).map_err(|e| Error::format(at, e.to_string()))?;
        tensors.push((name, t));
    }
    if c.remaining() != 0 {
        return Err(Error::format(c.offset(), "trailing bytes after last tensor"));
    }
    Ok(Checkpoint { tensors })
}

pub fn save_checkpoint(ck: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    write_checkpoint(ck, std::io::BufWriter::new(fs::File::create(path)?))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    read_checkpoint(&fs::read(path)?)
}
