//! Feedback networks: UE encoders, BS decoders, the cooperative shared
//! decoder with per-UE combination nets, benchmarks and phase feedback.

mod blocks;
mod data;
mod loss;
mod magnitude;
mod phase;
mod topology;

use num_complex::Complex64;

pub use blocks::{Combiner, Decoder, DecoderConfig, Encoder, EncoderConfig, OutputKind, LSTM_LAYERS};
pub use data::PlaneSet;
pub use loss::{loss_coop, loss_mse, loss_phase_weighted};
pub use magnitude::{MagnitudeArch, MagnitudeConfig, MagnitudeNet};
pub use phase::{PhaseConfig, PhaseNet, PhaseVariant};
pub use topology::{bit_mode_name, parse_bit_mode, Topology};

use crate::bitstream::{flip_bits, BitMode};
use crate::channel::CMatrix;
use crate::error::{Error, Result};
use crate::nn::{Checkpoint, Mode, ParamSet, Tape, Tensor, Var};
use crate::rng::StreamRng;

/// Uplink bit errors applied to emitted bitstreams during evaluation.
#[derive(Debug)]
pub struct BitErrors<'a> {
    pub ber: f64,
    pub rng: &'a mut StreamRng,
}

impl BitErrors<'_> {
    /// Re-encode each codeword row to bits, flip, and decode back.
    pub(crate) fn corrupt(&mut self, tape: &mut Tape, code: Var, mode: BitMode) -> Result<Var> {
        let v = tape.value(code);
        let (rows, cols) = (v.rows(), v.cols());
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let bits = mode.encode_row(v.row(r));
            let noisy = flip_bits(&bits, self.ber, self.rng)?;
            out.extend(mode.decode_row(&noisy)?);
        }
        Ok(tape.leaf(Tensor::matrix(rows, cols, out)))
    }
}

/// What the trainer needs from a network.
pub trait FeedbackModel {
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
    /// Training objective on `rows` of `data`. `rng` drives stochastic bit
    /// nodes in train mode.
    fn loss(&self, tape: &mut Tape, data: &PlaneSet, rows: &[usize], mode: Mode, rng: &mut StreamRng) -> Result<Var>;
    fn topology(&self) -> Topology;

    /// Trainable scalars; batch-norm running statistics are excluded.
    fn param_count(&self) -> usize {
        self.params().trainable_count()
    }
}

/// A network rebuilt from a checkpoint's topology header.
#[derive(Debug, Clone)]
pub enum AnyModel {
    Magnitude(MagnitudeNet),
    Phase(PhaseNet),
}

impl AnyModel {
    pub fn build(topology: &Topology, seed: u64) -> Result<Self> {
        match topology.kind.as_str() {
            "magnitude" => Ok(AnyModel::Magnitude(MagnitudeNet::build(
                MagnitudeConfig::from_topology(topology)?,
                seed,
            )?)),
            "phase" => Ok(AnyModel::Phase(PhaseNet::build(
                PhaseConfig::from_topology(topology)?,
                seed,
            )?)),
            other => Err(Error::format(0, format!("unknown model kind {other:?}"))),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let topo: Topology = ck
            .topology()
            .ok_or_else(|| Error::format(0, "checkpoint has no topology entry"))?
            .parse()?;
        let mut m = Self::build(&topo, 0)?;
        ck.restore(m.params_mut())?;
        Ok(m)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::from_params(self.params(), None, Some(&self.topology().to_string()))
    }
}

impl FeedbackModel for AnyModel {
    fn params(&self) -> &ParamSet {
        match self {
            AnyModel::Magnitude(m) => m.params(),
            AnyModel::Phase(m) => m.params(),
        }
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        match self {
            AnyModel::Magnitude(m) => m.params_mut(),
            AnyModel::Phase(m) => m.params_mut(),
        }
    }

    fn loss(&self, tape: &mut Tape, data: &PlaneSet, rows: &[usize], mode: Mode, rng: &mut StreamRng) -> Result<Var> {
        match self {
            AnyModel::Magnitude(m) => m.loss(tape, data, rows, mode, rng),
            AnyModel::Phase(m) => m.loss(tape, data, rows, mode, rng),
        }
    }

    fn topology(&self) -> Topology {
        match self {
            AnyModel::Magnitude(m) => m.topology(),
            AnyModel::Phase(m) => m.topology(),
        }
    }
}

/// Benchmark `which` (1, 2 or 3) for the same geometry, users and budget.
pub fn build_benchmark(which: u8, cfg: MagnitudeConfig, seed: u64) -> Result<MagnitudeNet> {
    let arch = match which {
        1 => MagnitudeArch::Alone,
        2 => MagnitudeArch::Wide,
        3 => MagnitudeArch::OwnCoDecoder,
        _ => return Err(Error::invalid(format!("benchmark must be 1, 2 or 3, got {which}"))),
    };
    MagnitudeNet::build(MagnitudeConfig { arch, ..cfg }, seed)
}

/// `mag_scale * |H| * exp(j angle)` per entry, as an `n_rx x n_tx` matrix.
pub fn combine_complex(magnitude: &[f64], phase: &[f64], mag_scale: f64, n_rx: usize, n_tx: usize) -> Result<CMatrix> {
    if magnitude.len() != phase.len() || magnitude.len() != n_rx * n_tx {
        return Err(Error::invalid(format!(
            "magnitude ({}) and phase ({}) planes must both hold {n_rx}x{n_tx} entries",
            magnitude.len(),
            phase.len()
        )));
    }
    let data = magnitude
        .iter()
        .zip(phase)
        .map(|(&m, &p)| Complex64::from_polar(mag_scale * m, p))
        .collect();
    Ok(CMatrix::from_vec(n_rx, n_tx, data))
}

#[cfg(test)]
mod tests;
