//! Phase feedback networks, with and without magnitude dependence.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use super::blocks::{Decoder, DecoderConfig, Encoder, EncoderConfig, OutputKind};
use super::data::PlaneSet;
use super::loss::{loss_mse, loss_phase_weighted};
use super::topology::{bit_mode_name, parse_bit_mode, Topology};
use super::{BitErrors, FeedbackModel};
use crate::bitstream::{BitMode, BitVector};
use crate::error::{Error, Result};
use crate::nn::{Mode, ParamSet, Tape, Tensor, Var};
use crate::rng::{domain, KeyedRng, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PhaseVariant {
    /// Phase in, unweighted phase MSE.
    Naive,
    /// Phase in, magnitude-weighted loss.
    Mdpf1,
    /// Phase and magnitude in, magnitude-weighted loss.
    Mdpf2,
}

impl PhaseVariant {
    pub const ALL: [PhaseVariant; 3] = [PhaseVariant::Naive, PhaseVariant::Mdpf1, PhaseVariant::Mdpf2];

    pub fn name(self) -> &'static str {
        match self {
            PhaseVariant::Naive => "naive",
            PhaseVariant::Mdpf1 => "mdpf1",
            PhaseVariant::Mdpf2 => "mdpf2",
        }
    }

    pub fn in_planes(self) -> usize {
        match self {
            PhaseVariant::Mdpf2 => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for PhaseVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PhaseVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "naive" => PhaseVariant::Naive,
            "mdpf1" => PhaseVariant::Mdpf1,
            "mdpf2" => PhaseVariant::Mdpf2,
            _ => return Err(Error::config(format!("unknown phase variant {s:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseConfig {
    pub n_rx: usize,
    pub n_tx: usize,
    pub feedback_bits: usize,
    pub bit_mode: BitMode,
    pub variant: PhaseVariant,
    /// Which UE of each group the model serves.
    pub user: usize,
}

impl PhaseConfig {
    pub fn dims(&self) -> usize {
        self.n_rx * self.n_tx
    }

    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            n_rx: self.n_rx,
            n_tx: self.n_tx,
            in_planes: self.variant.in_planes(),
            feedback_bits: self.feedback_bits,
            bit_mode: self.bit_mode,
        }
    }

    pub fn decoder(&self) -> Result<DecoderConfig> {
        Ok(DecoderConfig {
            n_rx: self.n_rx,
            n_tx: self.n_tx,
            input_width: self.encoder().code_width()?,
            width_factor: 1,
            output: OutputKind::Phase,
            lstm_refine: false,
        })
    }

    pub fn topology(&self) -> Topology {
        let mut t = Topology::new("phase");
        t.set("variant", self.variant.name());
        t.set("n_rx", self.n_rx);
        t.set("n_tx", self.n_tx);
        t.set("bits", self.feedback_bits);
        t.set("bit_mode", bit_mode_name(self.bit_mode));
        t.set("user", self.user);
        t
    }

    pub fn from_topology(t: &Topology) -> Result<Self> {
        t.expect_kind("phase")?;
        Ok(PhaseConfig {
            variant: t.get("variant")?.parse()?,
            n_rx: t.parse("n_rx")?,
            n_tx: t.parse("n_tx")?,
            feedback_bits: t.parse("bits")?,
            bit_mode: parse_bit_mode(t.get("bit_mode")?)?,
            user: t.parse("user")?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct PhaseNet {
    pub cfg: PhaseConfig,
    pub params: ParamSet,
    pub encoder: Encoder,
    pub decoder: Decoder,
}

impl PhaseNet {
    pub fn build(cfg: PhaseConfig, seed: u64) -> Result<Self> {
        let root = KeyedRng::new(seed).child(domain::INIT);
        let mut params = ParamSet::new();
        let encoder = Encoder::build(&mut params, "penc", cfg.encoder(), &mut root.stream_for(&[6]))?;
        let decoder = Decoder::build(&mut params, "pdec", cfg.decoder()?, &mut root.stream_for(&[7]))?;
        Ok(PhaseNet {
            cfg,
            params,
            encoder,
            decoder,
        })
    }

    /// Encoder input: phase scaled by `1/pi`, followed by the normalized
    /// magnitude for the second variant.
    fn input(&self, tape: &mut Tape, data: &PlaneSet, rows: &[usize]) -> Result<Var> {
        if self.cfg.user >= data.users || data.dims() != self.cfg.dims() {
            return Err(Error::contract(format!(
                "phase model for user {} of {} entries cannot read data with {} users of {}",
                self.cfg.user,
                self.cfg.dims(),
                data.users,
                data.dims()
            )));
        }
        let phase = data.gather_phase(self.cfg.user, rows).map(|p| p / PI);
        let p = tape.leaf(phase);
        match self.cfg.variant {
            PhaseVariant::Mdpf2 => {
                let m = tape.leaf(data.gather_magnitude(self.cfg.user, rows));
                tape.concat_cols(&[p, m])
            }
            _ => Ok(p),
        }
    }

    pub fn code(
        &self,
        tape: &mut Tape,
        data: &PlaneSet,
        rows: &[usize],
        mode: Mode,
        rng: &mut StreamRng,
        errors: Option<&mut BitErrors<'_>>,
    ) -> Result<Var> {
        let x = self.input(tape, data, rows)?;
        let c = self.encoder.forward(tape, &self.params, x, mode, rng)?;
        match errors {
            Some(e) => e.corrupt(tape, c, self.cfg.bit_mode),
            None => Ok(c),
        }
    }

    /// Reconstructed phase, `[rows, N_r N_t]` in [-pi, pi].
    pub fn reconstruct(&self, data: &PlaneSet, rows: &[usize], errors: Option<&mut BitErrors<'_>>) -> Result<Tensor> {
        let mut tape = Tape::new();
        let mut unused = KeyedRng::new(0).stream();
        let c = self.code(&mut tape, data, rows, Mode::Infer, &mut unused, errors)?;
        let y = self.decoder.forward(&mut tape, &self.params, c, Mode::Infer)?;
        Ok(tape.value(y).clone())
    }

    pub fn emit_bits(&self, data: &PlaneSet, rows: &[usize]) -> Result<Vec<BitVector>> {
        let mut tape = Tape::new();
        let mut unused = KeyedRng::new(0).stream();
        let c = self.code(&mut tape, data, rows, Mode::Infer, &mut unused, None)?;
        let v = tape.value(c);
        Ok((0..v.rows()).map(|r| self.cfg.bit_mode.encode_row(v.row(r))).collect())
    }
}

impl FeedbackModel for PhaseNet {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn loss(&self, tape: &mut Tape, data: &PlaneSet, rows: &[usize], mode: Mode, rng: &mut StreamRng) -> Result<Var> {
        let c = self.code(tape, data, rows, mode, rng, None)?;
        let pred = self.decoder.forward(tape, &self.params, c, mode)?;
        let phase = data.gather_phase(self.cfg.user, rows);
        match self.cfg.variant {
            PhaseVariant::Naive => loss_mse(tape, pred, &phase),
            _ => {
                let mag = data.gather_magnitude(self.cfg.user, rows);
                loss_phase_weighted(tape, pred, &phase, &mag)
            }
        }
    }

    fn topology(&self) -> Topology {
        self.cfg.topology()
    }
}
