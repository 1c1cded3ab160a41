//! Ranking objectives with analytic gradients w.r.t. per-item scores.

mod listwise;
mod pairwise;
mod softrank;

pub use listwise::{listmle_loss, listnet_loss};
pub use pairwise::{lambda_weight, lambdarank_loss, ranknet_loss};
pub use softrank::{pairwise_win_prob, rank_distribution, softrank_objective, RankDistribution};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default spread of the per-item score noise in the smoothed objective.
pub const DEFAULT_SOFTRANK_SIGMA: f64 = 0.15;

#[derive(Clone, Debug, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    /// `∂loss/∂score_j` for every item.
    pub score_gradients: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    RankNet,
    LambdaRank,
    ListNet,
    ListMle,
    SoftRank,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [
        LossKind::RankNet,
        LossKind::LambdaRank,
        LossKind::ListNet,
        LossKind::ListMle,
        LossKind::SoftRank,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::RankNet => "ranknet",
            LossKind::LambdaRank => "lambdarank",
            LossKind::ListNet => "listnet",
            LossKind::ListMle => "listmle",
            LossKind::SoftRank => "softrank",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            LossKind::RankNet => "RankNet",
            LossKind::LambdaRank => "LambdaRank",
            LossKind::ListNet => "ListNet",
            LossKind::ListMle => "ListMLE",
            LossKind::SoftRank => "SoftRank",
        }
    }

    /// Loss and score gradients for one list. `sigma` is only read by
    /// [`LossKind::SoftRank`].
    pub fn evaluate(self, scores: &[f64], labels: &[f64], sigma: f64) -> Result<LossOutput> {
        match self {
            LossKind::RankNet => ranknet_loss(scores, labels),
            LossKind::LambdaRank => lambdarank_loss(scores, labels),
            LossKind::ListNet => listnet_loss(scores, labels),
            LossKind::ListMle => listmle_loss(scores, labels),
            LossKind::SoftRank => softrank_objective(scores, labels, sigma),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown loss `{s}`")))
    }
}

fn check_lengths(scores: &[f64], labels: &[f64]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::contract(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::domain("loss of an empty list"));
    }
    if let Some(j) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::domain(format!("score of item {j} is not finite")));
    }
    Ok(())
}

/// Index of the single booked item.
fn single_booked(labels: &[f64]) -> Result<usize> {
    let mut booked = labels.iter().enumerate().filter(|(_, &y)| y > 0.0).map(|(j, _)| j);
    match (booked.next(), booked.next()) {
        (Some(j), None) => Ok(j),
        (None, _) => Err(Error::Label("list has no booked item".into())),
        (Some(_), Some(_)) => Err(Error::Label("list has more than one booked item".into())),
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
