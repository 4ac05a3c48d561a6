//! Finite-difference validation of tape gradients.

use super::tape::{NodeId, Tape};
use super::{Tensor, TensorError};

/// Compares tape gradients against central finite differences.
///
/// `build` receives a fresh tape plus one leaf per parameter (in `params`
/// order) and must return the scalar loss node. It is called once for the
/// analytic gradient and twice per parameter element for the numeric one,
/// so it must be deterministic (dropout in eval mode or rate 0).
///
/// Returns the maximum over all elements of |a - n| / max(|a|, |n|, 1e-8).
pub fn gradient_check<F>(
    mut build: F,
    params: &mut [Tensor],
    h: f64,
) -> Result<f64, TensorError>
where
    F: FnMut(&mut Tape, &[NodeId]) -> Result<NodeId, TensorError>,
{
    let eval = |build: &mut F, params: &[Tensor]| -> Result<f64, TensorError> {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = params.iter().map(|p| tape.leaf(p)).collect();
        let loss = build(&mut tape, &ids)?;
        if tape.value(loss).len() != 1 {
            return Err(TensorError::NonScalarLoss(tape.shape(loss).to_vec()));
        }
        Ok(tape.value(loss)[0])
    };

    // Analytic gradients at the base point.
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = params.iter().map(|p| tape.leaf(p)).collect();
    let loss = build(&mut tape, &ids)?;
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = ids.iter().map(|&id| tape.grad(id).to_vec()).collect();
    drop(tape);

    let mut worst = 0.0f64;
    for pi in 0..params.len() {
        for e in 0..params[pi].len() {
            let original = params[pi].data()[e];
            params[pi].data_mut()[e] = original + h;
            let plus = eval(&mut build, params)?;
            params[pi].data_mut()[e] = original - h;
            let minus = eval(&mut build, params)?;
            params[pi].data_mut()[e] = original;

            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[pi][e];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}
