//! Training objective: masked squared error on the known delay-matrix
//! entries plus an anti-diagonal consistency penalty on the future ones.

use crate::embedding::DelayMatrix;
use crate::tensor::{NodeId, Tape, TensorError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("prediction shape {pred:?} does not match truth {rows}x{cols}")]
    ShapeMismatch {
        pred: Vec<usize>,
        rows: usize,
        cols: usize,
    },
    #[error("known mask is empty")]
    EmptyMask,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Builds the scalar loss on the tape:
/// mean squared error over the known entries of the delay matrix, plus
/// `consistency_weight` times the mean over future anti-diagonals of the
/// population variance of the predicted entries on each diagonal. Cells on
/// one future diagonal all name the same instant, so their spread is pure
/// inconsistency.
pub fn training_loss(
    tape: &mut Tape,
    prediction: NodeId,
    truth: &DelayMatrix,
    consistency_weight: f64,
) -> Result<NodeId, LossError> {
    let rows = truth.horizon + 1;
    let cols = truth.window_length;
    if tape.shape(prediction) != [rows, cols] {
        return Err(LossError::ShapeMismatch {
            pred: tape.shape(prediction).to_vec(),
            rows,
            cols,
        });
    }
    let known: f64 = truth.known_count() as f64;
    if known == 0.0 {
        return Err(LossError::EmptyMask);
    }

    let truth_vals = tape.constant(vec![rows, cols], truth.values().to_vec())?;
    let mask_vals: Vec<f64> = truth
        .known_mask()
        .iter()
        .map(|&b| if b { 1.0 } else { 0.0 })
        .collect();
    let mask = tape.constant(vec![rows, cols], mask_vals)?;
    let diff = tape.sub(prediction, truth_vals)?;
    let masked = tape.mul(diff, mask)?;
    let squared = tape.mul(masked, masked)?;
    let sum = tape.sum(squared);
    let mse = tape.mul_const(sum, 1.0 / known);

    if consistency_weight == 0.0 || truth.horizon == 0 {
        return Ok(mse);
    }

    let mut variance_sum: Option<NodeId> = None;
    for r in 1..=truth.horizon {
        let cells = truth.future_diagonal_indices(r);
        let n = cells.len() as f64;
        let gathered = tape.gather(prediction, cells)?;
        let mean = tape.mean(gathered);
        let mean_b = tape.broadcast_to(mean, vec![n as usize])?;
        let centered = tape.sub(gathered, mean_b)?;
        let sq = tape.mul(centered, centered)?;
        let var_sum = tape.sum(sq);
        let var = tape.mul_const(var_sum, 1.0 / n);
        variance_sum = Some(match variance_sum {
            Some(acc) => tape.add(acc, var)?,
            None => var,
        });
    }
    let mean_var = tape.mul_const(
        variance_sum.expect("horizon >= 1"),
        1.0 / truth.horizon as f64,
    );
    let weighted = tape.mul_const(mean_var, consistency_weight);
    Ok(tape.add(mse, weighted)?)
}
