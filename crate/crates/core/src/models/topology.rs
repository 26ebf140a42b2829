//! Model topology header stored inside checkpoints, as `kind key=value ...`.

use std::fmt;
use std::str::FromStr;

use crate::bitstream::BitMode;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    pub kind: String,
    entries: Vec<(String, String)>,
}

impl Topology {
    pub fn new(kind: &str) -> Self {
        Topology {
            kind: kind.to_string(),
            entries: Vec::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl fmt::Display) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::format(0, format!("topology is missing {key:?}")))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key)?;
        v.parse()
            .map_err(|_| Error::format(0, format!("topology value {key}={v:?} does not parse")))
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::contract(format!(
                "expected a {kind} model, checkpoint holds {}",
                self.kind
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.kind)?;
        for (k, v) in &self.entries {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

impl FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut words = s.split_whitespace();
        let kind = words.next().ok_or_else(|| Error::format(0, "empty topology"))?;
        let mut t = Topology::new(kind);
        for w in words {
            let (k, v) = w
                .split_once('=')
                .ok_or_else(|| Error::format(0, format!("topology token {w:?} is not key=value")))?;
            t.set(k, v);
        }
        Ok(t)
    }
}

pub fn bit_mode_name(mode: BitMode) -> String {
    match mode {
        BitMode::Binarize => "binarize".to_string(),
        BitMode::Quantize(q) => format!("quantize{}", q.bits()),
    }
}

/// Accepts `binarize` or `quantize<B>`.
pub fn parse_bit_mode(s: &str) -> Result<BitMode> {
    if s == "binarize" {
        return Ok(BitMode::Binarize);
    }
    let bits = s
        .strip_prefix("quantize")
        .and_then(|b| b.parse().ok())
        .ok_or_else(|| Error::config(format!("unknown bit mode {s:?}, expected binarize or quantize<B>")))?;
    BitMode::quantize(bits).map_err(|e| Error::config(e.to_string()))
}
