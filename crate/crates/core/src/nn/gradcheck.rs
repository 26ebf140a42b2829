//! Central finite-difference gradient checking.

use super::params::{ParamId, ParamSet};
use super::tape::{Tape, Var};
use crate::error::Result;

pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Relative errors are measured against `max(|analytic|, |numeric|, floor)`
/// so that near-zero gradients compare on an absolute scale.
pub const RELATIVE_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and element index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// Compare the tape gradient of the scalar built by `forward` against central
/// differences for every trainable parameter element.
///
/// `forward` runs on surrogate tapes, so straight-through nodes are checked
/// along their identity surrogate.
pub fn grad_check<F>(params: &mut ParamSet, forward: F, tolerance: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamSet) -> Result<Var>,
{
    grad_check_with_step(params, forward, tolerance, DEFAULT_FD_STEP)
}

pub fn grad_check_with_step<F>(params: &mut ParamSet, forward: F, tolerance: f64, step: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamSet) -> Result<Var>,
{
    let eval = |params: &ParamSet| -> Result<f64> {
        let mut tape = Tape::surrogate();
        let out = forward(&mut tape, params)?;
        Ok(tape.value(out).data()[0])
    };

    params.clear_grads();
    let mut tape = Tape::surrogate();
    let loss = forward(&mut tape, params)?;
    let grads = tape.backward(loss)?;
    tape.accumulate_param_grads(&grads, params)?;

    let ids: Vec<ParamId> = params.trainable_ids().collect();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        tolerance,
    };
    for id in ids {
        let analytic = params
            .grad(id)
            .map(|g| g.data().to_vec())
            .unwrap_or_else(|| vec![0.0; params.value(id).len()]);
        for (j, &a) in analytic.iter().enumerate() {
            let orig = params.value(id).data()[j];
            params.value_mut(id).data_mut()[j] = orig + step;
            let up = eval(params)?;
            params.value_mut(id).data_mut()[j] = orig - step;
            let down = eval(params)?;
            params.value_mut(id).data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * step);
            let denom = a.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
            let rel = (a - numeric).abs() / denom;
            report.checked += 1;
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((params.name(id).to_string(), j));
            }
        }
    }
    params.clear_grads();
    Ok(report)
}
