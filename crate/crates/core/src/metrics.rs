//! Full-list NDCG and the significance tests used to compare models.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::PreparedDataset;
use crate::error::{Error, Result};
use crate::scoring::{rank, Ranking, RankingModel};

/// Gain of a relevance label, `2^y - 1`.
pub fn gain(label: f64) -> f64 {
    label.exp2() - 1.0
}

/// Positional discount `1 / log2(1 + position)` for a 1-based position.
pub fn discount(position: usize) -> f64 {
    1.0 / (1.0 + position as f64).log2()
}

/// DCG of the best possible ordering of `labels`.
pub fn ideal_dcg(labels: &[f64]) -> f64 {
    let mut gains: Vec<f64> = labels.iter().map(|&y| gain(y)).collect();
    gains.sort_by(|a, b| b.total_cmp(a));
    gains.iter().enumerate().map(|(p, g)| g * discount(p + 1)).sum()
}

/// NDCG over the whole list.
pub fn ndcg(ranking: &Ranking, labels: &[f64]) -> Result<f64> {
    if ranking.len() != labels.len() {
        return Err(Error::contract(format!(
            "ranking covers {} items but {} labels were given",
            ranking.len(),
            labels.len()
        )));
    }
    let ideal = ideal_dcg(labels);
    if ideal <= 0.0 {
        return Err(Error::Label("list has no booked item".into()));
    }
    let dcg: f64 = ranking
        .order()
        .iter()
        .enumerate()
        .map(|(p, &item)| gain(labels[item]) * discount(p + 1))
        .sum();
    Ok(dcg / ideal)
}

pub fn ndcg_of_scores(scores: &[f64], labels: &[f64]) -> Result<f64> {
    ndcg(&rank(scores)?, labels)
}

/// Sum with a fixed pairwise reduction tree.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        n if n <= 8 => values.iter().sum(),
        n => {
            let (left, right) = values.split_at(n / 2);
            pairwise_sum(left) + pairwise_sum(right)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub per_query: Vec<f64>,
    pub mean: f64,
    pub count: usize,
}

impl EvalResult {
    pub fn from_per_query(per_query: Vec<f64>) -> Self {
        let count = per_query.len();
        let mean = if count == 0 {
            f64::NAN
        } else {
            pairwise_sum(&per_query) / count as f64
        };
        Self { per_query, mean, count }
    }
}

/// Scores, ranks and averages NDCG over every query of `ds`.
pub fn mean_ndcg(model: &RankingModel, ds: &PreparedDataset) -> Result<EvalResult> {
    let per_query = ds
        .queries
        .iter()
        .map(|q| ndcg_of_scores(&model.score_query(q)?, &q.labels))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalResult::from_per_query(per_query))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    pub df: f64,
    /// One-sided p-value for the alternative "mean of `a` is smaller".
    pub p_value: f64,
    /// Both samples had zero variance.
    pub degenerate: bool,
}

fn mean_and_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    let sq: Vec<f64> = xs.iter().map(|x| (x - mean).powi(2)).collect();
    (mean, pairwise_sum(&sq) / (n - 1.0))
}

/// Welch's unequal-variance two-sample t-test.
pub fn two_sample_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::domain(format!(
            "t-test needs at least 2 values per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::domain("t-test samples must be finite"));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, va) = mean_and_var(a);
    let (mb, vb) = mean_and_var(b);
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    if se2 == 0.0 {
        let (t, p_value) = match ma.partial_cmp(&mb).expect("finite means") {
            std::cmp::Ordering::Equal => (0.0, 0.5),
            std::cmp::Ordering::Less => (f64::NEG_INFINITY, 0.0),
            std::cmp::Ordering::Greater => (f64::INFINITY, 1.0),
        };
        return Ok(TTestResult {
            t,
            df: na + nb - 2.0,
            p_value,
            degenerate: true,
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::domain(e.to_string()))?;
    Ok(TTestResult {
        t,
        df,
        p_value: dist.cdf(t),
        degenerate: false,
    })
}

/// Per-comparison threshold `alpha / n`.
pub fn bonferroni(alpha: f64, comparisons: usize) -> Result<f64> {
    if comparisons == 0 {
        return Err(Error::domain("bonferroni correction needs at least one comparison"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(alpha / comparisons as f64)
}
