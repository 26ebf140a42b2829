use super::params::{ParamId, ParamSet};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Bias-corrected Adam state, one moment pair per trainable parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    // indexed by ParamId; None for buffers
    moments: Vec<Option<(Vec<f64>, Vec<f64>)>>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            moments: Vec::new(),
        }
    }

    /// Allocate zeroed moment slots for every trainable parameter.
    pub fn attach(mut self, params: &ParamSet) -> Self {
        self.moments = params
            .ids()
            .map(|id| {
                params.is_trainable(id).then(|| {
                    let n = params.value(id).len();
                    (vec![0.0; n], vec![0.0; n])
                })
            })
            .collect();
        self
    }

    pub fn moments(&self, id: ParamId) -> Option<(&[f64], &[f64])> {
        self.moments
            .get(id.index())
            .and_then(|m| m.as_ref())
            .map(|(m, v)| (m.as_slice(), v.as_slice()))
    }

    pub(crate) fn set_moments(&mut self, id: ParamId, m: Vec<f64>, v: Vec<f64>) -> Result<()> {
        let slot = self
            .moments
            .get_mut(id.index())
            .and_then(|s| s.as_mut())
            .ok_or_else(|| Error::contract("optimizer slot missing"))?;
        if slot.0.len() != m.len() || slot.1.len() != v.len() {
            return Err(Error::contract("optimizer moment length mismatch"));
        }
        *slot = (m, v);
        Ok(())
    }
}

/// One Adam update of every trainable parameter; consumes the gradients.
pub fn adam_step(params: &mut ParamSet, state: &mut AdamState) -> Result<()> {
    if state.moments.len() != params.len() {
        return Err(Error::contract("optimizer state is not attached to this parameter set"));
    }
    let ids: Vec<ParamId> = params.trainable_ids().collect();
    if let Some(&missing) = ids.iter().find(|&&id| params.grad(id).is_none()) {
        return Err(Error::contract(format!(
            "parameter {:?} has no gradient",
            params.name(missing)
        )));
    }
    state.t += 1;
    let t = state.t as f64;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powf(t);
    let c2 = 1.0 - b2.powf(t);
    for id in ids {
        let g: Tensor = params.take_grad(id).expect("checked above");
        let (m, v) = state.moments[id.index()]
            .as_mut()
            .ok_or_else(|| Error::contract("optimizer slot missing"))?;
        let w = params.value_mut(id).data_mut();
        for (j, &gj) in g.data().iter().enumerate() {
            m[j] = b1 * m[j] + (1.0 - b1) * gj;
            v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
            let mhat = m[j] / c1;
            let vhat = v[j] / c2;
            w[j] -= state.lr * mhat / (vhat.sqrt() + state.eps);
        }
    }
    params.clear_grads();
    Ok(())
}
