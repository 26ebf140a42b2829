//! Feedback bit generation: uniform quantization, stochastic binarization,
//! straight-through tape nodes, channel bit errors and budget accounting.

use rand::Rng;

use crate::channel::io::Cursor;
use crate::error::{Error, Result};
use crate::nn::{Tape, Tensor, Var};
use crate::rng::StreamRng;

pub const MAX_QUANT_BITS: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantizerSpec {
    bits: u32,
}

impl QuantizerSpec {
    pub fn new(bits: u32) -> Result<Self> {
        if !(1..=MAX_QUANT_BITS).contains(&bits) {
            return Err(Error::invalid(format!(
                "quantizer bits must lie in 1..={MAX_QUANT_BITS}, got {bits}"
            )));
        }
        Ok(QuantizerSpec { bits })
    }

    pub fn bits(self) -> u32 {
        self.bits
    }

    pub fn levels(self) -> u32 {
        1 << self.bits
    }

    /// Bin width over [-1, 1].
    pub fn delta(self) -> f64 {
        2.0 / self.levels() as f64
    }

    pub fn index(self, x: f64) -> u32 {
        let x = if x.is_nan() { 0.0 } else { x.clamp(-1.0, 1.0) };
        let i = ((x + 1.0) / self.delta()).floor() as u32;
        i.min(self.levels() - 1)
    }

    pub fn center(self, index: u32) -> f64 {
        -1.0 + (index as f64 + 0.5) * self.delta()
    }

    /// `dequantize(quantize(x))` for one value.
    pub fn round_trip(self, x: f64) -> f64 {
        self.center(self.index(x))
    }
}

/// Packed bit string, least-significant bit of each byte first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct BitVector {
    len: usize,
    bytes: Vec<u8>,
}

impl BitVector {
    pub fn zeros(len: usize) -> Self {
        BitVector {
            len,
            bytes: vec![0; len.div_ceil(8)],
        }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut v = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            v.set(i, b);
        }
        v
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range for length {}", self.len);
        self.bytes[i / 8] >> (i % 8) & 1 == 1
    }

    pub fn set(&mut self, i: usize, bit: bool) {
        assert!(i < self.len, "bit {i} out of range for length {}", self.len);
        let mask = 1u8 << (i % 8);
        if bit {
            self.bytes[i / 8] |= mask;
        } else {
            self.bytes[i / 8] &= !mask;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(|i| self.get(i))
    }

    pub fn count_ones(&self) -> usize {
        self.bytes.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn hamming(&self, other: &BitVector) -> Result<usize> {
        if self.len != other.len {
            return Err(Error::invalid(format!(
                "bit vectors differ in length: {} vs {}",
                self.len, other.len
            )));
        }
        Ok(self
            .bytes
            .iter()
            .zip(&other.bytes)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum())
    }

    /// Append `width` low bits of `value`, LSB first.
    fn push_value(&mut self, value: u32, width: u32) {
        for k in 0..width {
            let i = self.len;
            self.len += 1;
            if self.bytes.len() * 8 < self.len {
                self.bytes.push(0);
            }
            self.set(i, value >> k & 1 == 1);
        }
    }

    /// `u32` bit length followed by the packed bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + self.bytes.len());
        out.extend_from_slice(&(self.len as u32).to_le_bytes());
        out.extend_from_slice(&self.bytes);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut c = Cursor::new(bytes);
        let v = Self::read(&mut c)?;
        if c.remaining() != 0 {
            return Err(Error::format(c.offset(), "trailing bytes after bit vector"));
        }
        Ok(v)
    }

    pub(crate) fn read(c: &mut Cursor<'_>) -> Result<Self> {
        let len = c.u32("bit length")? as usize;
        let at = c.offset();
        let bytes = c.take(len.div_ceil(8), "packed bits")?.to_vec();
        if len % 8 != 0 && bytes[len / 8] >> (len % 8) != 0 {
            return Err(Error::format(at + (len / 8) as u64, "nonzero padding bits"));
        }
        Ok(BitVector { len, bytes })
    }
}

pub fn pack_indices(indices: &[u32], spec: QuantizerSpec) -> BitVector {
    let mut v = BitVector {
        len: 0,
        bytes: Vec::with_capacity((indices.len() * spec.bits as usize).div_ceil(8)),
    };
    for &i in indices {
        v.push_value(i, spec.bits);
    }
    v
}

pub fn unpack_indices(bits: &BitVector, spec: QuantizerSpec) -> Result<Vec<u32>> {
    let b = spec.bits as usize;
    if bits.len() % b != 0 {
        return Err(Error::format(
            0,
            format!("bit length {} is not a multiple of {b}", bits.len()),
        ));
    }
    Ok((0..bits.len() / b)
        .map(|v| (0..b).fold(0u32, |acc, k| acc | (bits.get(v * b + k) as u32) << k))
        .collect())
}

pub fn quantize(x: &[f64], spec: QuantizerSpec) -> BitVector {
    let idx: Vec<u32> = x.iter().map(|&v| spec.index(v)).collect();
    pack_indices(&idx, spec)
}

pub fn dequantize(bits: &BitVector, spec: QuantizerSpec) -> Result<Vec<f64>> {
    Ok(unpack_indices(bits, spec)?
        .into_iter()
        .map(|i| spec.center(i))
        .collect())
}

/// Stochastic sign: +1 with probability `(1 + x) / 2`.
pub fn binarize(x: &[f64], rng: &mut StreamRng) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let v = if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) };
            let u: f64 = rng.random();
            if u < (1.0 + v) / 2.0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect()
}

/// Deterministic sign used at inference; zero maps to +1.
pub fn sign(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| if v >= 0.0 { 1.0 } else { -1.0 }).collect()
}

/// Pack ±1 symbols as bits (−1 → 0, +1 → 1).
pub fn symbols_to_bits(symbols: &[f64]) -> BitVector {
    let bits: Vec<bool> = symbols.iter().map(|&s| s > 0.0).collect();
    BitVector::from_bools(&bits)
}

pub fn bits_to_symbols(bits: &BitVector) -> Vec<f64> {
    bits.iter().map(|b| if b { 1.0 } else { -1.0 }).collect()
}

/// XOR each bit with 1 independently with probability `ber`.
pub fn flip_bits(bits: &BitVector, ber: f64, rng: &mut StreamRng) -> Result<BitVector> {
    if !(0.0..=1.0).contains(&ber) {
        return Err(Error::invalid(format!("bit error rate must lie in [0, 1], got {ber}")));
    }
    let mut out = bits.clone();
    for i in 0..bits.len() {
        let u: f64 = rng.random();
        if u < ber {
            out.set(i, !bits.get(i));
        }
    }
    Ok(out)
}

/// How the encoder output is turned into bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitMode {
    Quantize(QuantizerSpec),
    Binarize,
}

impl BitMode {
    pub fn quantize(bits: u32) -> Result<Self> {
        Ok(BitMode::Quantize(QuantizerSpec::new(bits)?))
    }

    /// Bits carried per encoder output value.
    pub fn bits_per_value(self) -> u32 {
        match self {
            BitMode::Quantize(q) => q.bits(),
            BitMode::Binarize => 1,
        }
    }

    /// Encoder output width for a bit count; errors when it does not divide.
    pub fn code_width(self, feedback_bits: usize) -> Result<usize> {
        let b = self.bits_per_value() as usize;
        if feedback_bits % b != 0 {
            return Err(Error::invalid(format!(
                "{feedback_bits} feedback bits are not divisible by {b} bits per value"
            )));
        }
        Ok(feedback_bits / b)
    }

    /// Pack one row of encoder values (already passed through the bit node).
    pub fn encode_row(self, row: &[f64]) -> BitVector {
        match self {
            BitMode::Quantize(q) => quantize(row, q),
            BitMode::Binarize => symbols_to_bits(row),
        }
    }

    pub fn decode_row(self, bits: &BitVector) -> Result<Vec<f64>> {
        match self {
            BitMode::Quantize(q) => dequantize(bits, q),
            BitMode::Binarize => Ok(bits_to_symbols(bits)),
        }
    }
}

/// Quantize-dequantize in the forward pass, identity gradient backward.
pub fn quantize_st(tape: &mut Tape, x: Var, spec: QuantizerSpec) -> Result<Var> {
    let fwd = tape.value(x).map(|v| spec.round_trip(v));
    tape.straight_through(x, fwd)
}

/// Binarization node with identity gradient. With an rng the forward draw is
/// stochastic; without one it is the deterministic sign.
pub fn binarize_st(tape: &mut Tape, x: Var, rng: Option<&mut StreamRng>) -> Result<Var> {
    let xv = tape.value(x);
    let data = match rng {
        Some(r) => binarize(xv.data(), r),
        None => sign(xv.data()),
    };
    let fwd = Tensor::new(xv.shape().to_vec(), data)?;
    tape.straight_through(x, fwd)
}

/// Feedback bit allocation for one UE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackBudget {
    pub total_bits: usize,
    pub bpd: f64,
    pub mag_bits: usize,
    pub phase_bits: usize,
    /// Real-valued dimensions the BPD is measured against (`N_r * N_t`).
    pub dims: usize,
    /// Set when the requested product was not an integer and was floored.
    pub rounded_down: bool,
}

impl FeedbackBudget {
    /// Budget with every bit assigned to magnitude.
    pub fn new(total_bits: usize, dims: usize) -> Result<Self> {
        if dims == 0 {
            return Err(Error::invalid("budget needs a positive dimension"));
        }
        Ok(FeedbackBudget {
            total_bits,
            bpd: total_bits as f64 / dims as f64,
            mag_bits: total_bits,
            phase_bits: 0,
            dims,
            rounded_down: false,
        })
    }

    /// `floor(bpd * dims)` bits.
    pub fn from_bpd(bpd: f64, dims: usize) -> Result<Self> {
        if !bpd.is_finite() || bpd <= 0.0 || dims == 0 {
            return Err(Error::invalid(format!(
                "bpd {bpd} and dimension {dims} must be positive"
            )));
        }
        let exact = bpd * dims as f64;
        let total = (exact + 1e-9).floor() as usize;
        let mut b = Self::new(total, dims)?;
        b.rounded_down = (exact - total as f64).abs() > 1e-9;
        Ok(b)
    }

    /// Reassign the split between magnitude and phase.
    pub fn with_split(mut self, mag_bits: usize) -> Result<Self> {
        if mag_bits > self.total_bits {
            return Err(Error::invalid(format!(
                "magnitude bits {mag_bits} exceed the budget of {}",
                self.total_bits
            )));
        }
        self.mag_bits = mag_bits;
        self.phase_bits = self.total_bits - mag_bits;
        Ok(self)
    }
}

/// `N_bits = L * gamma * B`, floored when not an integer.
pub fn budget(l: usize, gamma: f64, bits: u32) -> Result<FeedbackBudget> {
    if l == 0 || !gamma.is_finite() || gamma <= 0.0 || bits == 0 {
        return Err(Error::invalid(format!(
            "budget inputs must be positive: L={l}, gamma={gamma}, B={bits}"
        )));
    }
    let exact = l as f64 * gamma * bits as f64;
    let total = (exact + 1e-9).floor() as usize;
    let mut b = FeedbackBudget::new(total, l)?;
    b.rounded_down = (exact - total as f64).abs() > 1e-9;
    Ok(b)
}
