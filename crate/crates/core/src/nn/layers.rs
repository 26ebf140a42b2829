//! Layers built on the tape: fully connected, batch normalization, pointwise
//! activations and stacked LSTM.

use rand::Rng;

use super::params::{ParamId, ParamSet};
use super::tape::{Mode, Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::StreamRng;

pub const DEFAULT_LEAKY_ALPHA: f64 = 0.2;
pub const DEFAULT_BN_MOMENTUM: f64 = 0.9;
pub const DEFAULT_BN_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::LeakyRelu(a) => tape.leaky_relu(x, a),
            Activation::Tanh => tape.tanh(x),
            Activation::Sigmoid => tape.sigmoid(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Fc,
    BatchNorm,
    LeakyRelu,
    Tanh,
    Sigmoid,
    Lstm,
}

/// Declarative description of one layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub fan_in: usize,
    pub fan_out: usize,
    pub leaky_alpha: f64,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
}

impl LayerSpec {
    fn base(kind: LayerKind, fan_in: usize, fan_out: usize) -> Self {
        LayerSpec {
            kind,
            fan_in,
            fan_out,
            leaky_alpha: DEFAULT_LEAKY_ALPHA,
            bn_momentum: DEFAULT_BN_MOMENTUM,
            bn_epsilon: DEFAULT_BN_EPSILON,
            lstm_hidden: 0,
            lstm_layers: 0,
        }
    }

    pub fn fc(fan_in: usize, fan_out: usize) -> Self {
        Self::base(LayerKind::Fc, fan_in, fan_out)
    }

    pub fn batch_norm(features: usize) -> Self {
        Self::base(LayerKind::BatchNorm, features, features)
    }

    pub fn leaky_relu(features: usize) -> Self {
        Self::base(LayerKind::LeakyRelu, features, features)
    }

    pub fn tanh(features: usize) -> Self {
        Self::base(LayerKind::Tanh, features, features)
    }

    pub fn sigmoid(features: usize) -> Self {
        Self::base(LayerKind::Sigmoid, features, features)
    }

    /// Stacked LSTM over `features`-wide steps.
    pub fn lstm(features: usize, hidden: usize, layers: usize) -> Self {
        LayerSpec {
            lstm_hidden: hidden,
            lstm_layers: layers,
            ..Self::base(LayerKind::Lstm, features, hidden)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fan_in == 0 || self.fan_out == 0 {
            return Err(Error::invalid(format!("{:?} layer with zero width", self.kind)));
        }
        if !(self.leaky_alpha > 0.0 && self.leaky_alpha < 1.0) {
            return Err(Error::invalid("leaky_alpha must lie in (0, 1)"));
        }
        if self.bn_epsilon.is_nan() || self.bn_epsilon <= 0.0 {
            return Err(Error::invalid("bn_epsilon must be positive"));
        }
        if !(0.0..1.0).contains(&self.bn_momentum) {
            return Err(Error::invalid("bn_momentum must lie in [0, 1)"));
        }
        if self.kind == LayerKind::Lstm && (self.lstm_layers == 0 || self.lstm_hidden == 0) {
            return Err(Error::invalid(
                "lstm needs at least one layer and a positive hidden size",
            ));
        }
        Ok(())
    }

    /// Trainable scalar count of the layer this spec builds.
    pub fn param_count(&self) -> usize {
        match self.kind {
            LayerKind::Fc => self.fan_in * self.fan_out + self.fan_out,
            LayerKind::BatchNorm => 2 * self.fan_in,
            LayerKind::Lstm => {
                let h = self.lstm_hidden;
                (0..self.lstm_layers)
                    .map(|l| {
                        let input = if l == 0 { self.fan_in } else { h };
                        4 * h * (input + h) + 4 * h
                    })
                    .sum()
            }
            _ => 0,
        }
    }
}

fn glorot(rng: &mut StreamRng, fan_in: usize, fan_out: usize) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.random_range(-a..a)).collect();
    Tensor::matrix(fan_in, fan_out, data)
}

/// `y = x W + b`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new(params: &mut ParamSet, name: &str, fan_in: usize, fan_out: usize, rng: &mut StreamRng) -> Result<Self> {
        LayerSpec::fc(fan_in, fan_out).validate()?;
        let weight = params.add_param(&format!("{name}.weight"), glorot(rng, fan_in, fan_out))?;
        let bias = params.add_param(&format!("{name}.bias"), Tensor::zeros(&[fan_out]))?;
        Ok(Linear {
            weight,
            bias,
            fan_in,
            fan_out,
        })
    }

    pub fn forward(&self, tape: &mut Tape, params: &ParamSet, x: Var) -> Result<Var> {
        if tape.value(x).cols() != self.fan_in {
            return Err(Error::invalid(format!(
                "fc expects {} input features, got {}",
                self.fan_in,
                tape.value(x).cols()
            )));
        }
        let w = tape.param(params, self.weight);
        let b = tape.param(params, self.bias);
        let xw = tape.matmul(x, w)?;
        tape.add_row(xw, b)
    }
}

#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub momentum: f64,
    pub epsilon: f64,
    pub features: usize,
}

impl BatchNorm {
    pub fn new(params: &mut ParamSet, name: &str, features: usize) -> Result<Self> {
        Self::from_spec(params, name, &LayerSpec::batch_norm(features))
    }

    pub fn from_spec(params: &mut ParamSet, name: &str, spec: &LayerSpec) -> Result<Self> {
        spec.validate()?;
        let f = spec.fan_in;
        Ok(BatchNorm {
            gamma: params.add_param(&format!("{name}.gamma"), Tensor::full(&[f], 1.0))?,
            beta: params.add_param(&format!("{name}.beta"), Tensor::zeros(&[f]))?,
            running_mean: params.add_buffer(&format!("{name}.running_mean"), Tensor::zeros(&[f]))?,
            running_var: params.add_buffer(&format!("{name}.running_var"), Tensor::full(&[f], 1.0))?,
            momentum: spec.bn_momentum,
            epsilon: spec.bn_epsilon,
            features: f,
        })
    }

    /// Train mode normalizes by batch statistics and queues a running-stat
    /// update on the tape; infer mode uses the running statistics.
    pub fn forward(&self, tape: &mut Tape, params: &ParamSet, x: Var, mode: Mode) -> Result<Var> {
        let xv = tape.value(x);
        if xv.cols() != self.features {
            return Err(Error::invalid(format!(
                "batch norm expects {} features, got {}",
                self.features,
                xv.cols()
            )));
        }
        let gamma = tape.param(params, self.gamma);
        let beta = tape.param(params, self.beta);
        match mode {
            Mode::Train => {
                if tape.value(x).rows() < 2 {
                    return Err(Error::invalid("batch norm in train mode needs a batch of at least 2"));
                }
                let (y, mean, var) = tape.normalize(x, gamma, beta, self.epsilon, None)?;
                let m = self.momentum;
                let blend = |old: &Tensor, new: &[f64]| {
                    let d = old.data().iter().zip(new).map(|(o, n)| m * o + (1.0 - m) * n).collect();
                    Tensor::new(old.shape().to_vec(), d).unwrap()
                };
                let rm = blend(params.value(self.running_mean), &mean);
                let rv = blend(params.value(self.running_var), &var);
                tape.queue_buffer_update(self.running_mean, rm);
                tape.queue_buffer_update(self.running_var, rv);
                Ok(y)
            }
            Mode::Infer => {
                let mean = params.value(self.running_mean).data();
                let var = params.value(self.running_var).data();
                Ok(tape.normalize(x, gamma, beta, self.epsilon, Some((mean, var)))?.0)
            }
        }
    }
}

#[derive(Debug, Clone)]
struct LstmCell {
    w_input: ParamId,
    w_hidden: ParamId,
    bias: ParamId,
    input: usize,
}

/// Stacked LSTM; gate blocks are ordered input, forget, candidate, output.
#[derive(Debug, Clone)]
pub struct Lstm {
    cells: Vec<LstmCell>,
    pub features: usize,
    pub hidden: usize,
}

impl Lstm {
    pub fn new(params: &mut ParamSet, name: &str, spec: &LayerSpec, rng: &mut StreamRng) -> Result<Self> {
        spec.validate()?;
        let h = spec.lstm_hidden;
        let mut cells = Vec::with_capacity(spec.lstm_layers);
        for l in 0..spec.lstm_layers {
            let input = if l == 0 { spec.fan_in } else { h };
            let mut b = vec![0.0; 4 * h];
            b[h..2 * h].iter_mut().for_each(|v| *v = 1.0);
            cells.push(LstmCell {
                w_input: params.add_param(&format!("{name}.l{l}.w_input"), glorot(rng, input, 4 * h))?,
                w_hidden: params.add_param(&format!("{name}.l{l}.w_hidden"), glorot(rng, h, 4 * h))?,
                bias: params.add_param(&format!("{name}.l{l}.bias"), Tensor::new(vec![4 * h], b)?)?,
                input,
            });
        }
        Ok(Lstm {
            cells,
            features: spec.fan_in,
            hidden: h,
        })
    }

    pub fn layers(&self) -> usize {
        self.cells.len()
    }

    /// `x` is `[batch, steps * features]` (step-major within a row); returns the
    /// top layer's full output sequence as `[batch, steps * hidden]`.
    pub fn forward(&self, tape: &mut Tape, params: &ParamSet, x: Var) -> Result<Var> {
        let cols = tape.value(x).cols();
        if cols == 0 || cols % self.features != 0 {
            return Err(Error::invalid(format!(
                "lstm input width {cols} is not a positive multiple of {}",
                self.features
            )));
        }
        let steps = cols / self.features;
        let mut seq: Vec<Var> = (0..steps)
            .map(|t| tape.slice_cols(x, t * self.features, self.features))
            .collect::<Result<_>>()?;
        let h = self.hidden;
        for cell in &self.cells {
            let w_in = tape.param(params, cell.w_input);
            let w_h = tape.param(params, cell.w_hidden);
            let b = tape.param(params, cell.bias);
            let mut state: Option<(Var, Var)> = None;
            let mut out = Vec::with_capacity(steps);
            for &xt in &seq {
                debug_assert_eq!(tape.value(xt).cols(), cell.input);
                let mut z = tape.matmul(xt, w_in)?;
                if let Some((h_prev, _)) = state {
                    let zh = tape.matmul(h_prev, w_h)?;
                    z = tape.add(z, zh)?;
                }
                let z = tape.add_row(z, b)?;
                let zi = tape.slice_cols(z, 0, h)?;
                let zf = tape.slice_cols(z, h, h)?;
                let zg = tape.slice_cols(z, 2 * h, h)?;
                let zo = tape.slice_cols(z, 3 * h, h)?;
                let i = tape.sigmoid(zi);
                let g = tape.tanh(zg);
                let o = tape.sigmoid(zo);
                let ig = tape.mul(i, g)?;
                let c = match state {
                    Some((_, c_prev)) => {
                        let f = tape.sigmoid(zf);
                        let fc = tape.mul(f, c_prev)?;
                        tape.add(fc, ig)?
                    }
                    None => ig,
                };
                let tc = tape.tanh(c);
                let ht = tape.mul(o, tc)?;
                state = Some((ht, c));
                out.push(ht);
            }
            seq = out;
        }
        tape.concat_cols(&seq)
    }
}

/// One built layer.
#[derive(Debug, Clone)]
pub enum Layer {
    Fc(Linear),
    BatchNorm(BatchNorm),
    Act(Activation),
    Lstm(Lstm),
}

/// Layers applied in order; the building block of every network here.
#[derive(Debug, Clone)]
pub struct Sequential {
    pub specs: Vec<LayerSpec>,
    pub layers: Vec<Layer>,
}

impl Sequential {
    /// Layers are named `{prefix}.{index}.{kind}`.
    pub fn build(params: &mut ParamSet, prefix: &str, specs: &[LayerSpec], rng: &mut StreamRng) -> Result<Self> {
        let mut layers = Vec::with_capacity(specs.len());
        for (i, s) in specs.iter().enumerate() {
            s.validate()?;
            let name = format!("{prefix}.{i}");
            layers.push(match s.kind {
                LayerKind::Fc => Layer::Fc(Linear::new(params, &format!("{name}.fc"), s.fan_in, s.fan_out, rng)?),
                LayerKind::BatchNorm => Layer::BatchNorm(BatchNorm::from_spec(params, &format!("{name}.bn"), s)?),
                LayerKind::LeakyRelu => Layer::Act(Activation::LeakyRelu(s.leaky_alpha)),
                LayerKind::Tanh => Layer::Act(Activation::Tanh),
                LayerKind::Sigmoid => Layer::Act(Activation::Sigmoid),
                LayerKind::Lstm => Layer::Lstm(Lstm::new(params, &format!("{name}.lstm"), s, rng)?),
            });
        }
        Ok(Sequential {
            specs: specs.to_vec(),
            layers,
        })
    }

    pub fn forward(&self, tape: &mut Tape, params: &ParamSet, mut x: Var, mode: Mode) -> Result<Var> {
        for layer in &self.layers {
            x = match layer {
                Layer::Fc(l) => l.forward(tape, params, x)?,
                Layer::BatchNorm(l) => l.forward(tape, params, x, mode)?,
                Layer::Act(a) => a.apply(tape, x),
                Layer::Lstm(l) => l.forward(tape, params, x)?,
            };
        }
        Ok(x)
    }

    pub fn first_linear(&self) -> Option<&Linear> {
        self.layers.iter().find_map(|l| match l {
            Layer::Fc(fc) => Some(fc),
            _ => None,
        })
    }

    pub fn param_count(&self) -> usize {
        self.specs.iter().map(LayerSpec::param_count).sum()
    }

    pub fn out_width(&self) -> usize {
        self.specs.last().map_or(0, |s| s.fan_out)
    }
}
