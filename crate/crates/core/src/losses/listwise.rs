use super::{check_lengths, log_sum_exp, single_booked, LossOutput};
use crate::autodiff::softmax_values;
use crate::error::Result;

/// Cross-entropy between `softmax(labels)` and `softmax(scores)`.
pub fn listnet_loss(scores: &[f64], labels: &[f64]) -> Result<LossOutput> {
    check_lengths(scores, labels)?;
    let target = softmax_values(labels)?;
    let predicted = softmax_values(scores)?;
    let lse = log_sum_exp(scores);
    let value = -target.iter().zip(scores).map(|(t, s)| t * (s - lse)).sum::<f64>();
    Ok(LossOutput {
        value,
        score_gradients: predicted.iter().zip(&target).map(|(p, t)| p - t).collect(),
    })
}

/// Negative log-likelihood of the booked item being placed first.
pub fn listmle_loss(scores: &[f64], labels: &[f64]) -> Result<LossOutput> {
    check_lengths(scores, labels)?;
    let booked = single_booked(labels)?;
    let mut grads = softmax_values(scores)?;
    grads[booked] -= 1.0;
    Ok(LossOutput {
        value: log_sum_exp(scores) - scores[booked],
        score_gradients: grads,
    })
}
