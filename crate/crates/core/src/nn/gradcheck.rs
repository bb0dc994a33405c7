use super::layers::softmax_cross_entropy;
use super::network::{DropoutSource, Network};
use super::{NnError, Tensor};
use crate::seed::rng_from_seed;

pub const FD_STEP: f64 = 1e-5;
/// Steps tried, in order, when a probe at the previous step crosses a ReLU
/// or max-pool kink.
const FALLBACK_STEPS: [f64; 3] = [1e-6, 1e-7, 1e-8];
pub const REL_TOLERANCE: f64 = 1e-4;
/// Absolute tolerance used when both gradients are below
/// [`ABS_FALLBACK_BELOW`] in magnitude.
pub const ABS_TOLERANCE: f64 = 1e-8;
pub const ABS_FALLBACK_BELOW: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Largest relative error among entries judged relatively.
    pub max_rel_error: f64,
    /// Largest absolute error among entries judged by the fallback.
    pub max_abs_error: f64,
    pub failures: usize,
    /// Entries that needed a step below [`FD_STEP`] to stay off a kink.
    pub refined: usize,
    /// Entries sitting on a kink at every step; not judged.
    pub on_kink: usize,
}

impl GradCheckReport {
    pub fn ok(&self) -> bool {
        self.failures == 0
    }
}

/// Mean loss and kink signature of a training-mode pass.
fn batch_loss(net: &Network, batch: &[Tensor], targets: &[usize], masks: &[Vec<f64>]) -> Result<(f64, Vec<usize>), NnError> {
    let mut scratch = net.clone();
    let (logits, tape) = scratch.forward_train(batch, DropoutSource::Fixed(masks))?;
    let mut total = 0.0;
    for (z, &t) in logits.iter().zip(targets) {
        total += softmax_cross_entropy(z.data(), t)?.0;
    }
    Ok((total / batch.len() as f64, tape.kink_signature()))
}

/// Compares every analytic parameter gradient of the mean batch loss with
/// central differences. Dropout masks are drawn once from `mask_seed` and
/// then held fixed; batch norm runs in training mode on the fixed batch.
///
/// The loss is only piecewise smooth. When a `+-h` probe changes a ReLU sign
/// or a pooling winner the difference quotient straddles a kink, so the
/// entry is retried with smaller steps.
pub fn gradient_check(net: &Network, batch: &[Tensor], targets: &[usize], mask_seed: u64) -> Result<GradCheckReport, NnError> {
    if batch.len() != targets.len() {
        return Err(NnError::DimensionMismatch(format!("{} samples, {} targets", batch.len(), targets.len())));
    }
    let mut probe = net.clone();
    let (_, tape) = probe.forward_train(batch, DropoutSource::Random(&mut rng_from_seed(mask_seed)))?;
    let masks = tape.dropout_masks().map(<[_]>::to_vec).unwrap_or_default();

    let mut analytic_net = net.clone();
    let (logits, tape) = analytic_net.forward_train(batch, DropoutSource::Fixed(&masks))?;
    let scale = 1.0 / batch.len() as f64;
    let mut grads = Vec::with_capacity(batch.len());
    for (z, &t) in logits.iter().zip(targets) {
        let (_, g) = softmax_cross_entropy(z.data(), t)?;
        grads.push(Tensor::vector(g.into_iter().map(|v| v * scale).collect()));
    }
    let analytic = net.backward(&tape, grads)?;

    let base_sig = tape.kink_signature();
    let mut report = GradCheckReport { checked: 0, max_rel_error: 0.0, max_abs_error: 0.0, failures: 0, refined: 0, on_kink: 0 };
    let mut work = net.clone();
    for (p, grad) in analytic.iter().enumerate() {
        for (i, &a) in grad.iter().enumerate() {
            let orig = work.params_mut()[p][i];
            let mut numeric = None;
            for (attempt, &h) in std::iter::once(&FD_STEP).chain(&FALLBACK_STEPS).enumerate() {
                work.params_mut()[p][i] = orig + h;
                let (plus, sig_p) = batch_loss(&work, batch, targets, &masks)?;
                work.params_mut()[p][i] = orig - h;
                let (minus, sig_m) = batch_loss(&work, batch, targets, &masks)?;
                work.params_mut()[p][i] = orig;
                if sig_p == base_sig && sig_m == base_sig {
                    numeric = Some((plus - minus) / (2.0 * h));
                    if attempt > 0 {
                        report.refined += 1;
                    }
                    break;
                }
            }
            report.checked += 1;
            let Some(numeric) = numeric else {
                report.on_kink += 1;
                continue;
            };
            let diff = (a - numeric).abs();
            if a.abs() < ABS_FALLBACK_BELOW && numeric.abs() < ABS_FALLBACK_BELOW {
                report.max_abs_error = report.max_abs_error.max(diff);
                if diff > ABS_TOLERANCE {
                    report.failures += 1;
                }
            } else {
                let rel = diff / a.abs().max(numeric.abs());
                report.max_rel_error = report.max_rel_error.max(rel);
                if rel > REL_TOLERANCE {
                    report.failures += 1;
                }
            }
        }
    }
    Ok(report)
}
