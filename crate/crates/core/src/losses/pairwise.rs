use super::{check_lengths, sigmoid, single_booked, softplus, LossOutput};
use crate::error::Result;
use crate::metrics::{discount, gain, ideal_dcg};
use crate::scoring::rank;

/// Logistic cross-entropy over (booked, non-booked) pairs. Pairs of two
/// non-booked items are ties and contribute nothing.
pub fn ranknet_loss(scores: &[f64], labels: &[f64]) -> Result<LossOutput> {
    weighted_pairs(scores, labels, |_| 1.0)
}

/// RankNet with each pair weighted by the NDCG change of swapping it in
/// the current ranking.
pub fn lambdarank_loss(scores: &[f64], labels: &[f64]) -> Result<LossOutput> {
    check_lengths(scores, labels)?;
    let ranking = rank(scores)?;
    let ideal = ideal_dcg(labels);
    let booked = single_booked(labels)?;
    weighted_pairs(scores, labels, |other| {
        lambda_weight(
            labels[booked],
            labels[other],
            ranking.position_of(booked),
            ranking.position_of(other),
            ideal,
        )
    })
}

/// `|ΔNDCG|` for swapping two items at 1-based positions `pos_a`, `pos_b`.
pub fn lambda_weight(label_a: f64, label_b: f64, pos_a: usize, pos_b: usize, ideal_dcg: f64) -> f64 {
    (gain(label_a) - gain(label_b)).abs() * (discount(pos_a) - discount(pos_b)).abs() / ideal_dcg
}

fn weighted_pairs(scores: &[f64], labels: &[f64], weight: impl Fn(usize) -> f64) -> Result<LossOutput> {
    check_lengths(scores, labels)?;
    let booked = single_booked(labels)?;
    let mut value = 0.0;
    let mut grads = vec![0.0; scores.len()];
    for other in (0..scores.len()).filter(|&k| k != booked) {
        let w = weight(other);
        if w == 0.0 {
            continue;
        }
        let d = scores[booked] - scores[other];
        value += w * softplus(-d);
        let slope = w * sigmoid(-d);
        grads[booked] -= slope;
        grads[other] += slope;
    }
    Ok(LossOutput {
        value,
        score_gradients: grads,
    })
}
