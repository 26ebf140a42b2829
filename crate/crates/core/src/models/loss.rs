//! Training objectives.

use crate::error::{Error, Result};
use crate::nn::{Tape, Tensor, Var};

/// Squared Frobenius error summed per sample and averaged over the batch.
pub fn loss_mse(tape: &mut Tape, pred: Var, target: &Tensor) -> Result<Var> {
    tape.weighted_sq_err(pred, target, None)
}

/// Sum of the per-user squared errors.
pub fn loss_coop(tape: &mut Tape, preds: &[Var], targets: &[Tensor]) -> Result<Var> {
    if preds.len() != targets.len() || preds.is_empty() {
        return Err(Error::contract(format!(
            "cooperative loss got {} predictions for {} targets",
            preds.len(),
            targets.len()
        )));
    }
    let parts = preds
        .iter()
        .zip(targets)
        .map(|(&p, t)| loss_mse(tape, p, t))
        .collect::<Result<Vec<_>>>()?;
    tape.add_n(&parts)
}

/// `||(phase - pred) * magnitude||^2` per sample, averaged over the batch.
/// The magnitude is a constant weight, so gradients reach `pred` only.
pub fn loss_phase_weighted(tape: &mut Tape, pred: Var, phase: &Tensor, magnitude: &Tensor) -> Result<Var> {
    tape.weighted_sq_err(pred, phase, Some(magnitude))
}
