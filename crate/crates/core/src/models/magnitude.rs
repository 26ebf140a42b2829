//! Magnitude feedback networks: the cooperative model and its benchmarks.

use std::fmt;
use std::str::FromStr;

use super::blocks::{Combiner, Decoder, DecoderConfig, Encoder, EncoderConfig, OutputKind};
use super::data::PlaneSet;
use super::loss::loss_coop;
use super::topology::{bit_mode_name, parse_bit_mode, Topology};
use super::{BitErrors, FeedbackModel};
use crate::bitstream::{BitMode, BitVector};
use crate::error::{Error, Result};
use crate::nn::{Mode, ParamSet, Tape, Tensor, Var};
use crate::rng::{domain, KeyedRng, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MagnitudeArch {
    /// Individual decoders, one shared decoder over every UE's feedback and
    /// a combination net per UE.
    CoCsiNet,
    /// Benchmark 1: independent encoder/decoder pairs.
    Alone,
    /// Benchmark 2: `Alone` with doubled decoder hidden widths.
    Wide,
    /// Benchmark 3: cooperative topology, but each co-decoder sees only its
    /// own UE's feedback.
    OwnCoDecoder,
}

impl MagnitudeArch {
    pub const ALL: [MagnitudeArch; 4] = [
        MagnitudeArch::CoCsiNet,
        MagnitudeArch::Alone,
        MagnitudeArch::Wide,
        MagnitudeArch::OwnCoDecoder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MagnitudeArch::CoCsiNet => "cocsinet",
            MagnitudeArch::Alone => "benchmark1",
            MagnitudeArch::Wide => "benchmark2",
            MagnitudeArch::OwnCoDecoder => "benchmark3",
        }
    }
}

impl fmt::Display for MagnitudeArch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MagnitudeArch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "cocsinet" => MagnitudeArch::CoCsiNet,
            "benchmark1" | "alone" => MagnitudeArch::Alone,
            "benchmark2" | "wide" => MagnitudeArch::Wide,
            "benchmark3" | "own-codecoder" => MagnitudeArch::OwnCoDecoder,
            _ => return Err(Error::config(format!("unknown magnitude architecture {s:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagnitudeConfig {
    pub n_rx: usize,
    pub n_tx: usize,
    pub users: usize,
    /// Bits fed back by each UE.
    pub feedback_bits: usize,
    pub bit_mode: BitMode,
    pub arch: MagnitudeArch,
    pub lstm_refine: bool,
    /// Every UE reuses the first UE's parameters; the shared decoder then
    /// sees the sum of the codewords, which equals concatenation through a
    /// block-tied first layer.
    pub tied: bool,
}

impl MagnitudeConfig {
    pub fn dims(&self) -> usize {
        self.n_rx * self.n_tx
    }

    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            n_rx: self.n_rx,
            n_tx: self.n_tx,
            in_planes: 1,
            feedback_bits: self.feedback_bits,
            bit_mode: self.bit_mode,
        }
    }

    fn decoder(&self, input_width: usize, width_factor: usize) -> DecoderConfig {
        DecoderConfig {
            n_rx: self.n_rx,
            n_tx: self.n_tx,
            input_width,
            width_factor,
            output: OutputKind::Magnitude,
            lstm_refine: self.lstm_refine,
        }
    }

    pub fn individual_decoder(&self) -> Result<DecoderConfig> {
        let w = if self.arch == MagnitudeArch::Wide { 2 } else { 1 };
        Ok(self.decoder(self.encoder().code_width()?, w))
    }

    pub fn shared_decoder(&self) -> Result<DecoderConfig> {
        let c = self.encoder().code_width()?;
        let k = if self.tied { 1 } else { self.users };
        Ok(self.decoder(k * c, 1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.users == 0 {
            return Err(Error::config("magnitude model needs at least one user"));
        }
        self.encoder().validate()?;
        self.individual_decoder()?.validate()
    }

    pub fn topology(&self) -> Topology {
        let mut t = Topology::new("magnitude");
        t.set("arch", self.arch.name());
        t.set("n_rx", self.n_rx);
        t.set("n_tx", self.n_tx);
        t.set("users", self.users);
        t.set("bits", self.feedback_bits);
        t.set("bit_mode", bit_mode_name(self.bit_mode));
        t.set("lstm", self.lstm_refine);
        t.set("tied", self.tied);
        t
    }

    pub fn from_topology(t: &Topology) -> Result<Self> {
        t.expect_kind("magnitude")?;
        Ok(MagnitudeConfig {
            arch: t.get("arch")?.parse()?,
            n_rx: t.parse("n_rx")?,
            n_tx: t.parse("n_tx")?,
            users: t.parse("users")?,
            feedback_bits: t.parse("bits")?,
            bit_mode: parse_bit_mode(t.get("bit_mode")?)?,
            lstm_refine: t.parse("lstm")?,
            tied: t.parse("tied")?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct MagnitudeNet {
    pub cfg: MagnitudeConfig,
    pub params: ParamSet,
    pub encoders: Vec<Encoder>,
    pub decoders: Vec<Decoder>,
    pub shared: Option<Decoder>,
    pub co_decoders: Vec<Decoder>,
    pub combiners: Vec<Combiner>,
}

fn replicate<T: Clone>(users: usize, tied: bool, mut make: impl FnMut(usize) -> Result<T>) -> Result<Vec<T>> {
    if tied {
        let first = make(0)?;
        Ok(vec![first; users])
    } else {
        (0..users).map(make).collect()
    }
}

impl MagnitudeNet {
    /// Parameters are initialized from `seed`; each block draws from its own
    /// keyed stream, so equal blocks of different architectures start equal.
    pub fn build(cfg: MagnitudeConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let root = KeyedRng::new(seed).child(domain::INIT);
        let mut params = ParamSet::new();
        let p = &mut params;
        let (k_users, tied) = (cfg.users, cfg.tied);
        let encoders = replicate(k_users, tied, |k| {
            Encoder::build(
                p,
                &format!("enc{k}"),
                cfg.encoder(),
                &mut root.stream_for(&[1, k as u64]),
            )
        })?;
        let dec_cfg = cfg.individual_decoder()?;
        let decoders = replicate(k_users, tied, |k| {
            Decoder::build(p, &format!("dec{k}"), dec_cfg, &mut root.stream_for(&[2, k as u64]))
        })?;
        let cooperative = matches!(cfg.arch, MagnitudeArch::CoCsiNet | MagnitudeArch::OwnCoDecoder);
        let shared = if cfg.arch == MagnitudeArch::CoCsiNet {
            Some(Decoder::build(
                p,
                "shared",
                cfg.shared_decoder()?,
                &mut root.stream_for(&[3]),
            )?)
        } else {
            None
        };
        let co_decoders = if cfg.arch == MagnitudeArch::OwnCoDecoder {
            let co_cfg = cfg.decoder(cfg.encoder().code_width()?, 1);
            replicate(k_users, tied, |k| {
                Decoder::build(p, &format!("codec{k}"), co_cfg, &mut root.stream_for(&[4, k as u64]))
            })?
        } else {
            Vec::new()
        };
        let combiners = if cooperative {
            replicate(k_users, tied, |k| {
                Combiner::build(p, &format!("comb{k}"), cfg.dims(), &mut root.stream_for(&[5, k as u64]))
            })?
        } else {
            Vec::new()
        };
        Ok(MagnitudeNet {
            cfg,
            params,
            encoders,
            decoders,
            shared,
            co_decoders,
            combiners,
        })
    }

    fn check_users(&self, data: &PlaneSet) -> Result<()> {
        if data.users < self.cfg.users || data.dims() != self.cfg.dims() {
            return Err(Error::contract(format!(
                "model expects {} users of {} entries, data has {} users of {}",
                self.cfg.users,
                self.cfg.dims(),
                data.users,
                data.dims()
            )));
        }
        Ok(())
    }

    /// Codewords (post bit node) for every UE. With `errors`, each emitted
    /// bitstream is corrupted and decoded back before use.
    pub fn codes(
        &self,
        tape: &mut Tape,
        data: &PlaneSet,
        rows: &[usize],
        mode: Mode,
        rng: &mut StreamRng,
        mut errors: Option<&mut BitErrors<'_>>,
    ) -> Result<Vec<Var>> {
        self.check_users(data)?;
        let mut codes = Vec::with_capacity(self.cfg.users);
        for (k, enc) in self.encoders.iter().enumerate() {
            let x = tape.leaf(data.gather_magnitude(k, rows));
            let c = enc.forward(tape, &self.params, x, mode, rng)?;
            let c = match errors.as_deref_mut() {
                Some(e) => e.corrupt(tape, c, self.cfg.bit_mode)?,
                None => c,
            };
            codes.push(c);
        }
        Ok(codes)
    }

    pub fn decode(&self, tape: &mut Tape, codes: &[Var], mode: Mode) -> Result<Vec<Var>> {
        if codes.len() != self.cfg.users {
            return Err(Error::contract(format!(
                "model has {} users, got {} codewords",
                self.cfg.users,
                codes.len()
            )));
        }
        let p = &self.params;
        let shared = match &self.shared {
            Some(s) => {
                let input = if self.cfg.tied {
                    tape.add_n(codes)?
                } else {
                    tape.concat_cols(codes)?
                };
                Some(s.forward(tape, p, input, mode)?)
            }
            None => None,
        };
        let mut out = Vec::with_capacity(codes.len());
        for (k, &c) in codes.iter().enumerate() {
            let ind = self.decoders[k].forward(tape, p, c, mode)?;
            let y = match self.cfg.arch {
                MagnitudeArch::Alone | MagnitudeArch::Wide => ind,
                MagnitudeArch::CoCsiNet => self.combiners[k].forward(tape, p, ind, shared.unwrap())?,
                MagnitudeArch::OwnCoDecoder => {
                    let co = self.co_decoders[k].forward(tape, p, c, mode)?;
                    self.combiners[k].forward(tape, p, ind, co)?
                }
            };
            out.push(y);
        }
        Ok(out)
    }

    /// Reconstructed normalized magnitudes per UE, `[rows, N_r N_t]` each.
    pub fn reconstruct(
        &self,
        data: &PlaneSet,
        rows: &[usize],
        errors: Option<&mut BitErrors<'_>>,
    ) -> Result<Vec<Tensor>> {
        let mut tape = Tape::new();
        let mut unused = KeyedRng::new(0).stream();
        let codes = self.codes(&mut tape, data, rows, Mode::Infer, &mut unused, errors)?;
        let outs = self.decode(&mut tape, &codes, Mode::Infer)?;
        Ok(outs.into_iter().map(|v| tape.value(v).clone()).collect())
    }

    /// Bitstreams each UE would send, `[user][row]`.
    pub fn emit_bits(&self, data: &PlaneSet, rows: &[usize]) -> Result<Vec<Vec<BitVector>>> {
        let mut tape = Tape::new();
        let mut unused = KeyedRng::new(0).stream();
        let codes = self.codes(&mut tape, data, rows, Mode::Infer, &mut unused, None)?;
        Ok(codes
            .iter()
            .map(|&c| {
                let v = tape.value(c);
                (0..v.rows()).map(|r| self.cfg.bit_mode.encode_row(v.row(r))).collect()
            })
            .collect())
    }

    /// Trainable scalars divided evenly over the UEs.
    pub fn per_user_params(&self) -> f64 {
        self.params.trainable_count() as f64 / self.cfg.users as f64
    }
}

impl FeedbackModel for MagnitudeNet {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn loss(&self, tape: &mut Tape, data: &PlaneSet, rows: &[usize], mode: Mode, rng: &mut StreamRng) -> Result<Var> {
        let codes = self.codes(tape, data, rows, mode, rng, None)?;
        let preds = self.decode(tape, &codes, mode)?;
        let targets: Vec<Tensor> = (0..self.cfg.users).map(|k| data.gather_magnitude(k, rows)).collect();
        loss_coop(tape, &preds, &targets)
    }

    fn topology(&self) -> Topology {
        self.cfg.topology()
    }
}
