//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # comment
//! dataset.n_tx = 32
//! train.lr = 0.001   # trailing comments are allowed
//! eval.bpd_list = 0.1, 0.3, 0.5
//! ```
//!
//! Every key has a default, so an empty file is a valid configuration.
//! Command-line overrides are applied after the file.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;

use crate::bitstream::BitMode;
use crate::channel::{ArrayGeometry, DatasetConfig, PerturbSpec};
use crate::error::{Error, Result};
use crate::eval::{bits_for_bpd, AllocationConfig, ComparisonConfig, Suite};
use crate::models::{MagnitudeArch, MagnitudeConfig, PhaseConfig, PhaseVariant};
use crate::train::TrainConfig;

/// Every accepted key with its default value.
pub const KEYS: &[(&str, &str)] = &[
    ("dataset.n_tx", "32"),
    ("dataset.n_rx", "1"),
    ("dataset.spacing_ratio", "0.5"),
    ("dataset.n_paths", "3"),
    ("dataset.n_groups", "5000"),
    ("dataset.users", "2"),
    ("dataset.angle_jitter", "0.035"),
    ("dataset.gain_jitter", "0.1"),
    ("dataset.seed", "1"),
    ("model.kind", "magnitude"),
    ("model.arch", "cocsinet"),
    ("model.phase_variant", "mdpf1"),
    ("model.phase_user", "0"),
    ("model.bit_mode", "binarize"),
    ("model.quant_bits", "4"),
    ("model.bpd", "0.1"),
    ("model.feedback_bits", "0"),
    ("model.lstm_refine", "false"),
    ("model.tied", "false"),
    ("train.batch_size", "200"),
    ("train.lr", "0.001"),
    ("train.epochs", "200"),
    ("train.seed", "1"),
    ("train.checkpoint_every", "0"),
    ("train.early_report", "1"),
    ("train.deterministic", "false"),
    ("eval.suite", "coop_vs_alone"),
    ("eval.bpd_list", "0.1"),
    ("eval.seeds", "1,2,3"),
    ("eval.ber_list", "0,0.0001,0.001,0.01,0.1"),
    ("eval.ber_seeds", "10"),
    ("eval.total_bits", "16"),
    ("eval.splits", ""),
    ("eval.finetune_sizes", "0,500,1000,1500"),
    ("eval.shift_n_paths", "6"),
    ("eval.shift_seed", "1001"),
];

/// Where a value came from, for error messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Default,
    Line(usize),
    Override,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Default => f.write_str("default"),
            Origin::Line(n) => write!(f, "line {n}"),
            Origin::Override => f.write_str("--set"),
        }
    }
}

/// Raw key/value pairs with their origins, before typing.
#[derive(Debug, Clone, PartialEq)]
pub struct RawConfig {
    values: IndexMap<&'static str, (String, Origin)>,
}

fn known_key(key: &str) -> Option<&'static str> {
    KEYS.iter().find(|(k, _)| *k == key).map(|(k, _)| *k)
}

fn key_error(key: &str, origin: Origin, msg: impl fmt::Display) -> Error {
    Error::config(format!("{key} ({origin}): {msg}"))
}

impl Default for RawConfig {
    fn default() -> Self {
        RawConfig {
            values: KEYS
                .iter()
                .map(|(k, v)| (*k, (v.to_string(), Origin::Default)))
                .collect(),
        }
    }
}

impl RawConfig {
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut raw = RawConfig::default();
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (k, v) = body
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {n}: expected `key = value`, got {body:?}")))?;
            raw.set(k.trim(), v.trim(), Origin::Line(n))?;
        }
        Ok(raw)
    }

    pub fn set(&mut self, key: &str, value: &str, origin: Origin) -> Result<()> {
        let k = known_key(key).ok_or_else(|| key_error(key, origin, "unknown key"))?;
        self.values.insert(k, (value.to_string(), origin));
        Ok(())
    }

    /// Apply a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(format!("--set expects key=value, got {assignment:?}")))?;
        self.set(k.trim(), v.trim(), Origin::Override)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(v, _)| v.as_str())
    }

    /// Every key in table order as `key = value` lines; identical
    /// configurations render identically.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        for (k, (v, _)) in &self.values {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(v);
            s.push('\n');
        }
        s
    }

    fn entry(&self, key: &'static str) -> (&str, Origin) {
        let (v, o) = &self.values[key];
        (v.as_str(), *o)
    }

    fn typed<T: FromStr>(&self, key: &'static str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        let (v, o) = self.entry(key);
        v.parse::<T>()
            .map_err(|e| key_error(key, o, format!("cannot parse {v:?}: {e}")))
    }

    fn flag(&self, key: &'static str) -> Result<bool> {
        let (v, o) = self.entry(key);
        match v {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            _ => Err(key_error(key, o, format!("expected true or false, got {v:?}"))),
        }
    }

    fn list<T: FromStr>(&self, key: &'static str) -> Result<Vec<T>>
    where
        T::Err: fmt::Display,
    {
        let (v, o) = self.entry(key);
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<T>()
                    .map_err(|e| key_error(key, o, format!("cannot parse {s:?}: {e}")))
            })
            .collect()
    }

    fn check(&self, key: &'static str, ok: bool, msg: impl fmt::Display) -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(key_error(key, self.entry(key).1, msg))
        }
    }

    /// Re-tag a validation error with the key most likely responsible.
    fn blame<T>(&self, key: &'static str, r: Result<T>) -> Result<T> {
        r.map_err(|e| key_error(key, self.entry(key).1, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Magnitude,
    Phase,
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "magnitude" => Ok(ModelKind::Magnitude),
            "phase" => Ok(ModelKind::Phase),
            _ => Err(Error::config(format!("unknown model kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSettings {
    pub kind: ModelKind,
    pub arch: MagnitudeArch,
    pub phase_variant: PhaseVariant,
    pub phase_user: usize,
    pub bit_mode: BitMode,
    pub bpd: f64,
    /// Explicit feedback bits per UE; zero derives them from `bpd`.
    pub feedback_bits: usize,
    pub lstm_refine: bool,
    pub tied: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub suite: Suite,
    pub bpd_list: Vec<f64>,
    pub seeds: Vec<u64>,
    pub ber_list: Vec<f64>,
    pub ber_seeds: usize,
    pub total_bits: usize,
    /// `(magnitude, phase)` bit pairs; empty means every split on the
    /// quantizer grid.
    pub splits: Vec<(usize, usize)>,
    pub finetune_sizes: Vec<usize>,
    /// Paths per UE of the shifted distribution used for fine-tuning.
    pub shift_n_paths: usize,
    pub shift_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub model: ModelSettings,
    pub train: TrainConfig,
    pub eval: EvalSettings,
    pub raw: RawConfig,
}

fn parse_split(s: &str) -> std::result::Result<(usize, usize), String> {
    let (m, p) = s
        .split_once(':')
        .ok_or_else(|| format!("expected mag:phase, got {s:?}"))?;
    let m = m.trim().parse::<usize>().map_err(|e| e.to_string())?;
    let p = p.trim().parse::<usize>().map_err(|e| e.to_string())?;
    Ok((m, p))
}

impl ExperimentConfig {
    pub fn from_raw(raw: RawConfig) -> Result<Self> {
        let r = &raw;
        let geometry = ArrayGeometry {
            n_tx: r.typed("dataset.n_tx")?,
            n_rx: r.typed("dataset.n_rx")?,
            spacing_ratio: r.typed("dataset.spacing_ratio")?,
        };
        r.check("dataset.n_tx", geometry.n_tx > 0, "must be positive")?;
        r.check("dataset.n_rx", geometry.n_rx > 0, "must be positive")?;
        r.blame("dataset.spacing_ratio", geometry.validate())?;
        let dataset = DatasetConfig {
            geometry,
            n_paths: r.typed("dataset.n_paths")?,
            n_groups: r.typed("dataset.n_groups")?,
            users_per_group: r.typed("dataset.users")?,
            jitter: PerturbSpec {
                angle_jitter_max: r.typed("dataset.angle_jitter")?,
                gain_jitter_std: r.typed("dataset.gain_jitter")?,
            },
            seed: r.typed("dataset.seed")?,
        };
        r.check("dataset.n_paths", dataset.n_paths > 0, "must be positive")?;
        r.check("dataset.n_groups", dataset.n_groups > 0, "must be positive")?;
        r.check("dataset.users", dataset.users_per_group > 0, "must be positive")?;
        r.check(
            "dataset.angle_jitter",
            dataset.jitter.angle_jitter_max >= 0.0,
            "must be non-negative",
        )?;
        r.check(
            "dataset.gain_jitter",
            dataset.jitter.gain_jitter_std >= 0.0,
            "must be non-negative",
        )?;

        let bit_mode = match r.entry("model.bit_mode").0 {
            "binarize" => BitMode::Binarize,
            "quantize" => r.blame("model.quant_bits", BitMode::quantize(r.typed("model.quant_bits")?))?,
            other => {
                return Err(key_error(
                    "model.bit_mode",
                    r.entry("model.bit_mode").1,
                    format!("expected binarize or quantize, got {other:?}"),
                ))
            }
        };
        let model = ModelSettings {
            kind: r.blame("model.kind", r.entry("model.kind").0.parse())?,
            arch: r.blame("model.arch", r.entry("model.arch").0.parse())?,
            phase_variant: r.blame("model.phase_variant", r.entry("model.phase_variant").0.parse())?,
            phase_user: r.typed("model.phase_user")?,
            bit_mode,
            bpd: r.typed("model.bpd")?,
            feedback_bits: r.typed("model.feedback_bits")?,
            lstm_refine: r.flag("model.lstm_refine")?,
            tied: r.flag("model.tied")?,
        };
        r.check(
            "model.bpd",
            model.bpd > 0.0 && model.bpd.is_finite(),
            "must be positive",
        )?;
        r.check(
            "model.phase_user",
            model.phase_user < dataset.users_per_group,
            format!("must be below dataset.users ({})", dataset.users_per_group),
        )?;

        let train = TrainConfig {
            batch_size: r.typed("train.batch_size")?,
            lr: r.typed("train.lr")?,
            epochs: r.typed("train.epochs")?,
            seed: r.typed("train.seed")?,
            checkpoint_every: r.typed("train.checkpoint_every")?,
            early_report: r.typed("train.early_report")?,
            deterministic: r.flag("train.deterministic")?,
            checkpoint_dir: None,
        };
        r.check(
            "train.batch_size",
            train.batch_size >= 2,
            "must be at least 2: batch normalization needs two samples per batch",
        )?;
        r.check("train.lr", train.lr > 0.0 && train.lr.is_finite(), "must be positive")?;
        r.check("train.early_report", train.early_report > 0, "must be at least 1")?;

        let eval = EvalSettings {
            suite: r.blame("eval.suite", r.entry("eval.suite").0.parse())?,
            bpd_list: r.list("eval.bpd_list")?,
            seeds: r.list("eval.seeds")?,
            ber_list: r.list("eval.ber_list")?,
            ber_seeds: r.typed("eval.ber_seeds")?,
            total_bits: r.typed("eval.total_bits")?,
            splits: {
                let (v, o) = r.entry("eval.splits");
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse_split(s).map_err(|e| key_error("eval.splits", o, e)))
                    .collect::<Result<Vec<_>>>()?
            },
            finetune_sizes: r.list("eval.finetune_sizes")?,
            shift_n_paths: r.typed("eval.shift_n_paths")?,
            shift_seed: r.typed("eval.shift_seed")?,
        };
        r.check(
            "eval.bpd_list",
            !eval.bpd_list.is_empty() && eval.bpd_list.iter().all(|b| *b > 0.0 && b.is_finite()),
            "needs at least one positive value",
        )?;
        r.check("eval.seeds", !eval.seeds.is_empty(), "needs at least one seed")?;
        r.check(
            "eval.ber_list",
            eval.ber_list.iter().all(|b| (0.0..=1.0).contains(b)),
            "rates must lie in [0, 1]",
        )?;
        r.check(
            "eval.ber_seeds",
            eval.ber_seeds >= 10,
            "at least 10 corruption seeds are required",
        )?;
        r.check(
            "eval.splits",
            eval.splits.iter().all(|(m, p)| m + p == eval.total_bits),
            format!("every split must add up to eval.total_bits ({})", eval.total_bits),
        )?;
        r.check("eval.shift_n_paths", eval.shift_n_paths > 0, "must be positive")?;

        let cfg = ExperimentConfig {
            dataset,
            model,
            train,
            eval,
            raw,
        };
        match cfg.model.kind {
            ModelKind::Magnitude => cfg.raw.blame("model.bpd", cfg.magnitude_config().map(|_| ()))?,
            ModelKind::Phase => cfg.raw.blame("model.bpd", cfg.phase_config().map(|_| ()))?,
        }
        Ok(cfg)
    }

    pub fn parse_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut raw = RawConfig::parse_str(text)?;
        for o in overrides {
            raw.apply_override(o)?;
        }
        Self::from_raw(raw)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => {
                std::fs::read_to_string(p).map_err(|e| Error::config(format!("cannot read {}: {e}", p.display())))?
            }
            None => String::new(),
        };
        Self::parse_str(&text, overrides)
    }

    pub fn feedback_bits(&self) -> Result<usize> {
        if self.model.feedback_bits > 0 {
            Ok(self.model.feedback_bits)
        } else {
            bits_for_bpd(self.model.bpd, self.dataset.geometry.dims(), self.model.bit_mode)
        }
    }

    pub fn magnitude_config(&self) -> Result<MagnitudeConfig> {
        let g = self.dataset.geometry;
        let cfg = MagnitudeConfig {
            n_rx: g.n_rx,
            n_tx: g.n_tx,
            users: self.dataset.users_per_group,
            feedback_bits: self.feedback_bits()?,
            bit_mode: self.model.bit_mode,
            arch: self.model.arch,
            lstm_refine: self.model.lstm_refine,
            tied: self.model.tied,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn phase_config(&self) -> Result<PhaseConfig> {
        let g = self.dataset.geometry;
        let cfg = PhaseConfig {
            n_rx: g.n_rx,
            n_tx: g.n_tx,
            feedback_bits: self.feedback_bits()?,
            bit_mode: self.model.bit_mode,
            variant: self.model.phase_variant,
            user: self.model.phase_user,
        };
        cfg.encoder().validate()?;
        Ok(cfg)
    }

    pub fn comparison_config(&self) -> ComparisonConfig {
        ComparisonConfig {
            dataset: self.dataset.clone(),
            train: self.train.clone(),
            bpd_list: self.eval.bpd_list.clone(),
            seeds: self.eval.seeds.clone(),
            bit_mode: self.model.bit_mode,
        }
    }

    /// Bit-allocation search settings; without explicit splits every
    /// multiple of the quantizer width from 0 to `total_bits` is tried.
    pub fn allocation_config(&self) -> Result<AllocationConfig> {
        let total = self.eval.total_bits;
        let step = self.model.bit_mode.bits_per_value() as usize;
        let splits = if self.eval.splits.is_empty() {
            if total % step != 0 {
                return Err(Error::config(format!(
                    "eval.total_bits ({total}) is not a multiple of model.quant_bits ({step})"
                )));
            }
            (0..=total / step).map(|i| (i * step, total - i * step)).collect()
        } else {
            self.eval.splits.clone()
        };
        Ok(AllocationConfig {
            magnitude: MagnitudeConfig {
                feedback_bits: 0,
                ..self.magnitude_config_unchecked()
            },
            phase_variant: self.model.phase_variant,
            phase_bit_mode: self.model.bit_mode,
            total_bits: total,
            splits,
            train: self.train.clone(),
        })
    }

    fn magnitude_config_unchecked(&self) -> MagnitudeConfig {
        let g = self.dataset.geometry;
        MagnitudeConfig {
            n_rx: g.n_rx,
            n_tx: g.n_tx,
            users: self.dataset.users_per_group,
            feedback_bits: 0,
            bit_mode: self.model.bit_mode,
            arch: self.model.arch,
            lstm_refine: self.model.lstm_refine,
            tied: self.model.tied,
        }
    }

    /// Distribution used by the fine-tuning mismatch experiment: same
    /// geometry and users, a different number of paths and its own seed.
    pub fn shifted_dataset(&self) -> DatasetConfig {
        DatasetConfig {
            n_paths: self.eval.shift_n_paths,
            seed: self.eval.shift_seed,
            ..self.dataset.clone()
        }
    }
}
