//! Encoder, decoder and combination-network building blocks.

use std::f64::consts::PI;

use crate::bitstream::{binarize_st, quantize_st, BitMode};
use crate::error::{Error, Result};
use crate::nn::{LayerSpec, Linear, Lstm, Mode, ParamSet, Sequential, Tape, Var};
use crate::rng::StreamRng;

pub const LSTM_LAYERS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    pub n_rx: usize,
    pub n_tx: usize,
    /// Number of `N_r x N_t` planes fed to the encoder (phase only = 1,
    /// phase and magnitude = 2).
    pub in_planes: usize,
    pub feedback_bits: usize,
    pub bit_mode: BitMode,
}

impl EncoderConfig {
    pub fn dims(&self) -> usize {
        self.n_rx * self.n_tx
    }

    pub fn input_width(&self) -> usize {
        self.in_planes * self.dims()
    }

    pub fn hidden_width(&self) -> usize {
        2 * self.dims()
    }

    pub fn code_width(&self) -> Result<usize> {
        self.bit_mode
            .code_width(self.feedback_bits)
            .map_err(|e| Error::config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims() == 0 || self.in_planes == 0 {
            return Err(Error::config("encoder needs positive antenna counts and planes"));
        }
        if self.code_width()? == 0 {
            return Err(Error::config("encoder needs at least one feedback value"));
        }
        Ok(())
    }

    pub fn specs(&self) -> Result<Vec<LayerSpec>> {
        self.validate()?;
        let (i, h, c) = (self.input_width(), self.hidden_width(), self.code_width()?);
        Ok(vec![
            LayerSpec::fc(i, h),
            LayerSpec::batch_norm(h),
            LayerSpec::leaky_relu(h),
            LayerSpec::fc(h, h),
            LayerSpec::batch_norm(h),
            LayerSpec::leaky_relu(h),
            LayerSpec::fc(h, c),
            LayerSpec::batch_norm(c),
            LayerSpec::tanh(c),
        ])
    }
}

/// UE-side network: three FC+BN stages ending in tanh, then the bit node.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub cfg: EncoderConfig,
    pub net: Sequential,
}

impl Encoder {
    pub fn build(params: &mut ParamSet, prefix: &str, cfg: EncoderConfig, rng: &mut StreamRng) -> Result<Self> {
        let net = Sequential::build(params, prefix, &cfg.specs()?, rng)?;
        Ok(Encoder { cfg, net })
    }

    /// Pre-bit activations in [-1, 1].
    pub fn soft(&self, tape: &mut Tape, params: &ParamSet, x: Var, mode: Mode) -> Result<Var> {
        self.net.forward(tape, params, x, mode)
    }

    /// Codeword after the bit node. Binarization draws from `rng` in train
    /// mode and takes the sign in infer mode.
    pub fn forward(&self, tape: &mut Tape, params: &ParamSet, x: Var, mode: Mode, rng: &mut StreamRng) -> Result<Var> {
        let s = self.soft(tape, params, x, mode)?;
        match self.cfg.bit_mode {
            BitMode::Quantize(q) => quantize_st(tape, s, q),
            BitMode::Binarize => match mode {
                Mode::Train => binarize_st(tape, s, Some(rng)),
                Mode::Infer => binarize_st(tape, s, None),
            },
        }
    }

    pub fn first_layer(&self) -> &Linear {
        self.net.first_linear().expect("encoder starts with a linear layer")
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputKind {
    /// Sigmoid output in [0, 1].
    Magnitude,
    /// `pi * tanh` output in [-pi, pi].
    Phase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecoderConfig {
    pub n_rx: usize,
    pub n_tx: usize,
    pub input_width: usize,
    /// Multiplier on the two hidden FC widths (`4 N_r N_t` at 1).
    pub width_factor: usize,
    pub output: OutputKind,
    pub lstm_refine: bool,
}

impl DecoderConfig {
    pub fn dims(&self) -> usize {
        self.n_rx * self.n_tx
    }

    pub fn hidden_width(&self) -> usize {
        4 * self.width_factor * self.dims()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims() == 0 || self.input_width == 0 || self.width_factor == 0 {
            return Err(Error::config("decoder widths must be positive"));
        }
        if self.lstm_refine && self.n_rx < 2 {
            return Err(Error::config(format!(
                "lstm refinement needs at least 2 receive antennas, got n_rx = {}",
                self.n_rx
            )));
        }
        Ok(())
    }

    pub fn specs(&self) -> Result<Vec<LayerSpec>> {
        self.validate()?;
        let (i, h, l) = (self.input_width, self.hidden_width(), self.dims());
        Ok(vec![
            LayerSpec::fc(i, h),
            LayerSpec::batch_norm(h),
            LayerSpec::leaky_relu(h),
            LayerSpec::fc(h, h),
            LayerSpec::batch_norm(h),
            LayerSpec::leaky_relu(h),
            LayerSpec::fc(h, l),
            LayerSpec::batch_norm(l),
        ])
    }

    pub fn lstm_spec(&self) -> LayerSpec {
        LayerSpec::lstm(self.n_tx, self.n_tx, LSTM_LAYERS)
    }

    pub fn param_count(&self) -> Result<usize> {
        let body: usize = self.specs()?.iter().map(LayerSpec::param_count).sum();
        Ok(body
            + if self.lstm_refine {
                self.lstm_spec().param_count()
            } else {
                0
            })
    }
}

fn output_activation(tape: &mut Tape, z: Var, kind: OutputKind) -> Var {
    match kind {
        OutputKind::Magnitude => tape.sigmoid(z),
        OutputKind::Phase => {
            let t = tape.tanh(z);
            tape.scale(t, PI)
        }
    }
}

/// BS-side network: two wide FC+BN+LeakyReLU stages, an `N_r N_t` FC+BN
/// stage with the output activation, and optional LSTM refinement over the
/// `N_r` rows. The refinement output is added to the last pre-activation so
/// the output activation still bounds the result.
#[derive(Debug, Clone)]
pub struct Decoder {
    pub cfg: DecoderConfig,
    pub body: Sequential,
    pub lstm: Option<Lstm>,
}

impl Decoder {
    pub fn build(params: &mut ParamSet, prefix: &str, cfg: DecoderConfig, rng: &mut StreamRng) -> Result<Self> {
        let body = Sequential::build(params, prefix, &cfg.specs()?, rng)?;
        let lstm = if cfg.lstm_refine {
            Some(Lstm::new(params, &format!("{prefix}.lstm"), &cfg.lstm_spec(), rng)?)
        } else {
            None
        };
        Ok(Decoder { cfg, body, lstm })
    }

    pub fn forward(&self, tape: &mut Tape, params: &ParamSet, code: Var, mode: Mode) -> Result<Var> {
        let z = self.body.forward(tape, params, code, mode)?;
        let initial = output_activation(tape, z, self.cfg.output);
        match &self.lstm {
            None => Ok(initial),
            Some(lstm) => {
                let r = lstm.forward(tape, params, initial)?;
                let refined = tape.add(z, r)?;
                Ok(output_activation(tape, refined, self.cfg.output))
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.cfg.param_count().unwrap_or(0)
    }
}

/// Per-UE merge of individual and shared reconstructions: one FC layer with
/// `N_r N_t` outputs and a sigmoid. Input order is individual then shared.
#[derive(Debug, Clone)]
pub struct Combiner {
    pub fc: Linear,
}

impl Combiner {
    pub fn build(params: &mut ParamSet, prefix: &str, dims: usize, rng: &mut StreamRng) -> Result<Self> {
        Ok(Combiner {
            fc: Linear::new(params, &format!("{prefix}.fc"), 2 * dims, dims, rng)?,
        })
    }

    pub fn forward(&self, tape: &mut Tape, params: &ParamSet, individual: Var, shared: Var) -> Result<Var> {
        let x = tape.concat_cols(&[individual, shared])?;
        let y = self.fc.forward(tape, params, x)?;
        Ok(tape.sigmoid(y))
    }

    pub fn param_count(&self) -> usize {
        LayerSpec::fc(self.fc.fan_in, self.fc.fan_out).param_count()
    }
}
