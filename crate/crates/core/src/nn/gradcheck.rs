//! Finite-difference validation of analytic gradients.

use super::network::{Network, OutputGrad};
use super::tensor::Tensor;
use crate::error::Result;

/// Central-difference step used by [`grad_check`].
pub const FD_STEP: f64 = 1e-5;

/// Compares backprop gradients against central differences for every parameter.
///
/// `loss` maps `(reps, logits)` to the scalar loss and its output gradient.
/// Returns `max |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
/// Parameters whose gradient is absent (unused head) are compared against zero.
pub fn grad_check<F>(net: &Network, loss: F, batch: &Tensor) -> Result<f64>
where
    F: Fn(&Tensor, Option<&Tensor>) -> (f64, OutputGrad),
{
    let out = net.forward(batch)?;
    let (_, upstream) = loss(&out.reps, out.logits.as_ref());
    let grads = net.backward(&out.cache, &upstream)?;

    let eval = |n: &Network| -> Result<f64> {
        let (reps, logits) = n.infer(batch)?;
        Ok(loss(&reps, logits.as_ref()).0)
    };

    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    let counts: Vec<usize> = net.parameters().iter().map(|t| t.len()).collect();
    for (p, &count) in counts.iter().enumerate() {
        for k in 0..count {
            let original = probe.parameters()[p].data()[k];
            probe.parameters_mut()[p].data_mut()[k] = original + FD_STEP;
            let plus = eval(&probe)?;
            probe.parameters_mut()[p].data_mut()[k] = original - FD_STEP;
            let minus = eval(&probe)?;
            probe.parameters_mut()[p].data_mut()[k] = original;

            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let analytic = grads.get(p).map_or(0.0, |g| g.data()[k]);
            let denom = analytic.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
