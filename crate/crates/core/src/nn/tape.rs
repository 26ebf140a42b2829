//! Reverse-mode gradient tape over 2-D tensors.

use std::collections::HashMap;

use super::linalg::{gemm, gemm_nt_acc, gemm_tn_acc};
use super::params::{ParamId, ParamSet};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Train mode uses batch statistics and stochastic bit nodes; infer mode uses
/// running statistics and deterministic bit nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    LeakyRelu(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Normalize {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        batch_stats: bool,
    },
    ConcatCols(Vec<Var>),
    SliceCols {
        x: Var,
        start: usize,
    },
    StraightThrough(Var),
    WeightedSqErr {
        pred: Var,
        target: Vec<f64>,
        weight: Option<Vec<f64>>,
        batch: usize,
    },
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Records a forward computation so gradients can be replayed from any
/// scalar node.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    pending_buffers: Vec<(ParamId, Tensor)>,
    surrogate: bool,
}

/// Gradients of one scalar with respect to every node of a tape.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

fn shape_err(op: &str, a: &Tensor, b: &Tensor) -> Error {
    Error::invalid(format!("{op}: incompatible shapes {:?} and {:?}", a.shape(), b.shape()))
}

fn acc(slot: &mut Option<Vec<f64>>, len: usize) -> &mut Vec<f64> {
    slot.get_or_insert_with(|| vec![0.0; len])
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A tape whose straight-through nodes forward their input unchanged, so
    /// finite differences see the same surrogate the backward pass uses.
    pub fn surrogate() -> Self {
        Tape {
            surrogate: true,
            ..Self::default()
        }
    }

    pub fn is_surrogate(&self) -> bool {
        self.surrogate
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Parameter node; repeated requests for the same id share one node.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(params.value(id).clone(), Op::Param);
        self.params.insert(id, v);
        v
    }

    pub(crate) fn queue_buffer_update(&mut self, id: ParamId, value: Tensor) {
        self.pending_buffers.push((id, value));
    }

    /// Write queued running-statistics updates into `params`.
    pub fn commit_buffers(&mut self, params: &mut ParamSet) {
        for (id, t) in self.pending_buffers.drain(..) {
            *params.value_mut(id) = t;
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k) = (av.rows(), av.cols());
        if bv.shape().len() != 2 || bv.rows() != k {
            return Err(shape_err("matmul", av, bv));
        }
        let n = bv.cols();
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, av.data(), bv.data(), 0.0, &mut out);
        Ok(self.push(Tensor::matrix(m, n, out), Op::MatMul(a, b)))
    }

    /// `x + bias`, with `bias` broadcast over rows.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        let n = xv.cols();
        if bv.len() != n {
            return Err(shape_err("add_row", xv, bv));
        }
        let mut out = xv.data().to_vec();
        for row in out.chunks_mut(n) {
            row.iter_mut().zip(bv.data()).for_each(|(o, b)| *o += b);
        }
        let t = Tensor::matrix(xv.rows(), n, out);
        Ok(self.push(t, Op::AddRow(x, bias)))
    }

    fn zip_with(&mut self, a: Var, b: Var, name: &str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.len() != bv.len() || av.rows() != bv.rows() {
            return Err(shape_err(name, av, bv));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        let t = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.push(t, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let t = self.value(x).map(|v| v * c);
        self.push(t, Op::Scale(x, c))
    }

    pub fn leaky_relu(&mut self, x: Var, alpha: f64) -> Var {
        let t = self.value(x).map(|v| if v >= 0.0 { v } else { alpha * v });
        self.push(t, Op::LeakyRelu(x, alpha))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let t = self.value(x).map(f64::tanh);
        self.push(t, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let t = self.value(x).map(sigmoid);
        self.push(t, Op::Sigmoid(x))
    }

    /// Per-column affine normalization `gamma * (x - mean) * inv_std + beta`.
    /// With `stats = None` the mean and variance come from the batch and the
    /// backward pass differentiates through them.
    pub(crate) fn normalize(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
        stats: Option<(&[f64], &[f64])>,
    ) -> Result<(Var, Vec<f64>, Vec<f64>)> {
        let xv = self.value(x);
        let (b, f) = (xv.rows(), xv.cols());
        if self.value(gamma).len() != f || self.value(beta).len() != f {
            return Err(shape_err("batch_norm", xv, self.value(gamma)));
        }
        let (mean, var, batch_stats) = match stats {
            Some((m, v)) => (m.to_vec(), v.to_vec(), false),
            None => {
                let mut mean = vec![0.0; f];
                for row in xv.data().chunks(f) {
                    mean.iter_mut().zip(row).for_each(|(m, x)| *m += x);
                }
                mean.iter_mut().for_each(|m| *m /= b as f64);
                let mut var = vec![0.0; f];
                for row in xv.data().chunks(f) {
                    for j in 0..f {
                        let d = row[j] - mean[j];
                        var[j] += d * d;
                    }
                }
                var.iter_mut().for_each(|v| *v /= b as f64);
                (mean, var, true)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut xhat = xv.data().to_vec();
        for row in xhat.chunks_mut(f) {
            for j in 0..f {
                row[j] = (row[j] - mean[j]) * inv_std[j];
            }
        }
        let (g, be) = (self.value(gamma).data(), self.value(beta).data());
        let mut out = xhat.clone();
        for row in out.chunks_mut(f) {
            for j in 0..f {
                row[j] = g[j] * row[j] + be[j];
            }
        }
        let t = Tensor::matrix(b, f, out);
        let v = self.push(
            t,
            Op::Normalize {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            },
        );
        Ok((v, mean, var))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::invalid("concat of zero tensors"))?;
        let rows = self.value(*first).rows();
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).cols()).collect();
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(Error::invalid("concat_cols: row counts differ"));
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        Ok(self.push(Tensor::matrix(rows, total, out), Op::ConcatCols(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        let cols = xv.cols();
        if len == 0 || start + len > cols {
            return Err(Error::invalid(format!(
                "slice_cols [{start}, {}) out of {cols} columns",
                start + len
            )));
        }
        let mut out = Vec::with_capacity(xv.rows() * len);
        for r in 0..xv.rows() {
            out.extend_from_slice(&xv.row(r)[start..start + len]);
        }
        let t = Tensor::matrix(xv.rows(), len, out);
        Ok(self.push(t, Op::SliceCols { x, start }))
    }

    /// Forward `forward` (or `x` itself on a surrogate tape); backward passes
    /// the upstream gradient through unchanged.
    pub fn straight_through(&mut self, x: Var, forward: Tensor) -> Result<Var> {
        let xv = self.value(x);
        if forward.len() != xv.len() {
            return Err(shape_err("straight_through", xv, &forward));
        }
        let t = if self.surrogate { xv.clone() } else { forward };
        Ok(self.push(t, Op::StraightThrough(x)))
    }

    /// `sum_i w_i^2 (pred_i - target_i)^2 / batch`, i.e. the squared
    /// Frobenius error per sample averaged over the batch.
    pub fn weighted_sq_err(&mut self, pred: Var, target: &Tensor, weight: Option<&Tensor>) -> Result<Var> {
        let pv = self.value(pred);
        if pv.len() != target.len() {
            return Err(shape_err("sq_err", pv, target));
        }
        if let Some(w) = weight {
            if w.len() != target.len() {
                return Err(shape_err("sq_err weight", pv, w));
            }
        }
        let batch = pv.rows();
        let mut s = 0.0;
        for i in 0..pv.len() {
            let d = pv.data()[i] - target.data()[i];
            let w = weight.map_or(1.0, |w| w.data()[i]);
            s += w * w * d * d;
        }
        let t = Tensor::scalar(s / batch as f64);
        Ok(self.push(
            t,
            Op::WeightedSqErr {
                pred,
                target: target.data().to_vec(),
                weight: weight.map(|w| w.data().to_vec()),
                batch,
            },
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let t = Tensor::scalar(self.value(x).sum());
        self.push(t, Op::Sum(x))
    }

    pub fn add_n(&mut self, parts: &[Var]) -> Result<Var> {
        let mut it = parts.iter();
        let mut acc = *it.next().ok_or_else(|| Error::invalid("sum of zero terms"))?;
        for &p in it {
            acc = self.add(acc, p)?;
        }
        Ok(acc)
    }

    /// Gradients of scalar `loss` with respect to every node. The tape is not
    /// consumed, so repeated calls give identical results.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::invalid(format!(
                "backward needs a scalar, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let len_of = |v: Var| self.nodes[v.0].value.len();
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                gemm_nt_acc(m, n, k, g, bv.data(), acc(&mut grads[a.0], m * k));
                gemm_tn_acc(m, k, n, av.data(), g, acc(&mut grads[b.0], k * n));
            }
            Op::AddRow(x, b) => {
                let n = self.value(*b).len();
                acc(&mut grads[x.0], g.len())
                    .iter_mut()
                    .zip(g)
                    .for_each(|(a, d)| *a += d);
                let gb = acc(&mut grads[b.0], n);
                for row in g.chunks(n) {
                    gb.iter_mut().zip(row).for_each(|(a, d)| *a += d);
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    acc(&mut grads[v.0], g.len())
                        .iter_mut()
                        .zip(g)
                        .for_each(|(s, d)| *s += d);
                }
            }
            Op::Sub(a, b) => {
                acc(&mut grads[a.0], g.len())
                    .iter_mut()
                    .zip(g)
                    .for_each(|(s, d)| *s += d);
                acc(&mut grads[b.0], g.len())
                    .iter_mut()
                    .zip(g)
                    .for_each(|(s, d)| *s -= d);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                let ga = acc(&mut grads[a.0], g.len());
                for j in 0..g.len() {
                    ga[j] += g[j] * bv[j];
                }
                let gb = acc(&mut grads[b.0], g.len());
                for j in 0..g.len() {
                    gb[j] += g[j] * av[j];
                }
            }
            Op::Scale(x, c) => {
                acc(&mut grads[x.0], g.len())
                    .iter_mut()
                    .zip(g)
                    .for_each(|(s, d)| *s += c * d);
            }
            Op::LeakyRelu(x, alpha) => {
                let xv = self.value(*x).data();
                let gx = acc(&mut grads[x.0], g.len());
                for j in 0..g.len() {
                    gx[j] += if xv[j] >= 0.0 { g[j] } else { alpha * g[j] };
                }
            }
            Op::Tanh(x) => {
                let y = node.value.data();
                let gx = acc(&mut grads[x.0], g.len());
                for j in 0..g.len() {
                    gx[j] += g[j] * (1.0 - y[j] * y[j]);
                }
            }
            Op::Sigmoid(x) => {
                let y = node.value.data();
                let gx = acc(&mut grads[x.0], g.len());
                for j in 0..g.len() {
                    gx[j] += g[j] * y[j] * (1.0 - y[j]);
                }
            }
            Op::Normalize {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let f = inv_std.len();
                let b = g.len() / f;
                let gam = self.value(*gamma).data();
                let mut dgamma = vec![0.0; f];
                let mut dbeta = vec![0.0; f];
                for (row_g, row_h) in g.chunks(f).zip(xhat.chunks(f)) {
                    for j in 0..f {
                        dgamma[j] += row_g[j] * row_h[j];
                        dbeta[j] += row_g[j];
                    }
                }
                let gx = acc(&mut grads[x.0], g.len());
                if *batch_stats {
                    // dx = inv_std / B * (B dxhat - sum dxhat - xhat * sum(dxhat xhat))
                    let bf = b as f64;
                    for j in 0..f {
                        let sum_dxhat = dbeta[j] * gam[j];
                        let sum_dxhat_xhat = dgamma[j] * gam[j];
                        let k = inv_std[j] / bf;
                        for r in 0..b {
                            let idx = r * f + j;
                            let dxhat = g[idx] * gam[j];
                            gx[idx] += k * (bf * dxhat - sum_dxhat - xhat[idx] * sum_dxhat_xhat);
                        }
                    }
                } else {
                    for r in 0..b {
                        for j in 0..f {
                            gx[r * f + j] += g[r * f + j] * gam[j] * inv_std[j];
                        }
                    }
                }
                acc(&mut grads[gamma.0], f)
                    .iter_mut()
                    .zip(&dgamma)
                    .for_each(|(s, d)| *s += d);
                acc(&mut grads[beta.0], f)
                    .iter_mut()
                    .zip(&dbeta)
                    .for_each(|(s, d)| *s += d);
            }
            Op::ConcatCols(parts) => {
                let total = node.value.cols();
                let rows = node.value.rows();
                let mut offset = 0;
                for p in parts {
                    let w = self.value(*p).cols();
                    let gp = acc(&mut grads[p.0], rows * w);
                    for r in 0..rows {
                        let src = &g[r * total + offset..r * total + offset + w];
                        gp[r * w..(r + 1) * w].iter_mut().zip(src).for_each(|(s, d)| *s += d);
                    }
                    offset += w;
                }
            }
            Op::SliceCols { x, start } => {
                let len = node.value.cols();
                let cols = self.value(*x).cols();
                let gx = acc(&mut grads[x.0], len_of(*x));
                for (r, row) in g.chunks(len).enumerate() {
                    gx[r * cols + start..r * cols + start + len]
                        .iter_mut()
                        .zip(row)
                        .for_each(|(s, d)| *s += d);
                }
            }
            Op::StraightThrough(x) => {
                acc(&mut grads[x.0], g.len())
                    .iter_mut()
                    .zip(g)
                    .for_each(|(s, d)| *s += d);
            }
            Op::WeightedSqErr {
                pred,
                target,
                weight,
                batch,
            } => {
                let p = self.value(*pred).data();
                let k = 2.0 * g[0] / *batch as f64;
                let gp = acc(&mut grads[pred.0], p.len());
                for j in 0..p.len() {
                    let w = weight.as_ref().map_or(1.0, |w| w[j]);
                    gp[j] += k * w * w * (p[j] - target[j]);
                }
            }
            Op::Sum(x) => {
                let n = len_of(*x);
                acc(&mut grads[x.0], n).iter_mut().for_each(|s| *s += g[0]);
            }
        }
    }

    /// Add the gradient of every parameter node into `params`.
    pub fn accumulate_param_grads(&self, grads: &Gradients, params: &mut ParamSet) -> Result<()> {
        let mut ids: Vec<(&ParamId, &Var)> = self.params.iter().collect();
        ids.sort_by_key(|(id, _)| **id);
        for (&id, &v) in ids {
            if let Some(g) = grads.get(v) {
                params.accumulate_grad(id, g)?;
            }
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
