use super::params::{EncoderParams, GradBuffer};
use crate::error::{Error, Result};
use crate::trainer::{batch_gradient, batch_loss, Batch};

// Below this magnitude both gradients count as zero and the absolute
// difference is used instead of the relative one.
const ABS_FLOOR: f64 = 1e-8;

/// Compares `analytic` against central finite differences of `loss` on every
/// entry of every row present in `analytic`. Returns the max relative error.
pub fn finite_difference_check<F>(
    params: &EncoderParams,
    analytic: &GradBuffer,
    epsilon: f64,
    mut loss: F,
) -> Result<f64>
where
    F: FnMut(&EncoderParams) -> Result<f64>,
{
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for (row, grad) in analytic.rows() {
        for (k, &a) in grad.iter().enumerate() {
            let orig = probe.row(row)[k];
            probe.row_mut(row)[k] = orig + epsilon;
            let hi = loss(&probe)?;
            probe.row_mut(row)[k] = orig - epsilon;
            let lo = loss(&probe)?;
            probe.row_mut(row)[k] = orig;
            if !(hi.is_finite() && lo.is_finite()) {
                return Err(Error::Numerical(
                    "non-finite loss during gradient check".into(),
                ));
            }
            let numeric = (hi - lo) / (2.0 * epsilon);
            let scale = a.abs().max(numeric.abs());
            let err = if scale < ABS_FLOOR {
                (a - numeric).abs()
            } else {
                (a - numeric).abs() / scale
            };
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

/// Max relative error between the analytic contrastive-loss gradient and
/// central finite differences, over every embedding entry the batch touches.
pub fn grad_check(
    params: &EncoderParams,
    batch: &Batch,
    temperature: f64,
    epsilon: f64,
) -> Result<f64> {
    let (loss, grads) = batch_gradient(params, batch, temperature)?;
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("loss is {loss}")));
    }
    finite_difference_check(params, &grads, epsilon, |p| {
        batch_loss(p, batch, temperature)
    })
}
