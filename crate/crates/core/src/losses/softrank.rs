use libm::erfc;

use super::{check_lengths, LossOutput};
use crate::error::{Error, Result};
use crate::metrics::{discount, gain, ideal_dcg};

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("score noise sigma must be positive, got {sigma}")))
    }
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Probability that item `j` outscores item `k` when both scores carry
/// independent `N(0, sigma^2)` noise.
pub fn pairwise_win_prob(z_j: f64, z_k: f64, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    Ok(normal_cdf((z_j - z_k) / (sigma * std::f64::consts::SQRT_2)))
}

/// `probs[j][r]` is the probability that item `j` lands at 1-based rank `r + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct RankDistribution {
    probs: Vec<Vec<f64>>,
}

impl RankDistribution {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn row(&self, item: usize) -> &[f64] {
        &self.probs[item]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.probs
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.probs.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.len()).map(|r| self.probs.iter().map(|row| row[r]).sum()).collect()
    }
}

/// Adds one Bernoulli contest, lost with probability `p`, to a rank distribution.
fn fold_contest(dist: &[f64], p: f64) -> Vec<f64> {
    let mut next = vec![0.0; dist.len() + 1];
    for (r, &mass) in dist.iter().enumerate() {
        next[r] += mass * (1.0 - p);
        next[r + 1] += mass * p;
    }
    next
}

/// Rank distribution of `item` from its contest-loss probabilities,
/// skipping `exclude`.
fn item_distribution(item: usize, lose: &[Vec<f64>], exclude: Option<usize>) -> Vec<f64> {
    let mut dist = vec![1.0];
    for (k, row) in lose.iter().enumerate() {
        if k != item && Some(k) != exclude {
            dist = fold_contest(&dist, row[item]);
        }
    }
    dist
}

/// `lose[k][j]`: probability that item `k` beats item `j`.
fn contest_matrix(scores: &[f64], sigma: f64) -> Vec<Vec<f64>> {
    let scale = sigma * std::f64::consts::SQRT_2;
    scores
        .iter()
        .map(|&zk| scores.iter().map(|&zj| normal_cdf((zk - zj) / scale)).collect())
        .collect()
}

pub fn rank_distribution(scores: &[f64], sigma: f64) -> Result<RankDistribution> {
    check_sigma(sigma)?;
    if scores.is_empty() {
        return Err(Error::domain("rank distribution of an empty list"));
    }
    let lose = contest_matrix(scores, sigma);
    Ok(RankDistribution {
        probs: (0..scores.len()).map(|j| item_distribution(j, &lose, None)).collect(),
    })
}

/// Negative smoothed NDCG: the positional discount is replaced by its
/// expectation under the rank distribution.
pub fn softrank_objective(scores: &[f64], labels: &[f64], sigma: f64) -> Result<LossOutput> {
    check_sigma(sigma)?;
    check_lengths(scores, labels)?;
    let ideal = ideal_dcg(labels);
    if ideal <= 0.0 {
        return Err(Error::Label("list has no booked item".into()));
    }
    let n = scores.len();
    let lose = contest_matrix(scores, sigma);
    let discounts: Vec<f64> = (1..=n).map(discount).collect();
    let scale = sigma * std::f64::consts::SQRT_2;

    let mut objective = 0.0;
    let mut grads = vec![0.0; n];
    for j in 0..n {
        let weight = gain(labels[j]) / ideal;
        if weight == 0.0 {
            continue;
        }
        let dist = item_distribution(j, &lose, None);
        objective += weight * dist.iter().zip(&discounts).map(|(p, d)| p * d).sum::<f64>();
        for k in (0..n).filter(|&k| k != j) {
            let rest = item_distribution(j, &lose, Some(k));
            // d dist(r) / d p = rest(r - 1) - rest(r)
            let d_obj_dp: f64 = (0..n)
                .map(|r| {
                    let prev = if r > 0 { rest[r - 1] } else { 0.0 };
                    let cur = rest.get(r).copied().unwrap_or(0.0);
                    discounts[r] * (prev - cur)
                })
                .sum();
            let dp_dzk = normal_pdf((scores[k] - scores[j]) / scale) / scale;
            // loss is the negated objective
            grads[k] -= weight * d_obj_dp * dp_dzk;
            grads[j] += weight * d_obj_dp * dp_dzk;
        }
    }
    Ok(LossOutput {
        value: -objective,
        score_gradients: grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, steps: usize) -> f64 {
        let h = (b - a) / steps as f64;
        let mut s = f(a) + f(b);
        for i in 1..steps {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn win_probability_examples() {
        assert_eq!(pairwise_win_prob(0.4, 0.4, 0.15).unwrap(), 0.5);
        let sigma = 0.15;
        let p = pairwise_win_prob(sigma * std::f64::consts::SQRT_2, 0.0, sigma).unwrap();
        let density = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let oracle = 0.5 + simpson(density, 0.0, 1.0, 10_000);
        assert!((p - oracle).abs() < 1e-12, "{p} vs {oracle}");
        assert!((p - 0.84134).abs() < 1e-5);
        assert!(pairwise_win_prob(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn win_probabilities_are_complementary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let s = rng.random_range(0.01..2.0);
            let sum = pairwise_win_prob(a, b, s).unwrap() + pairwise_win_prob(b, a, s).unwrap();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn small_distributions() {
        assert_eq!(rank_distribution(&[2.0], 0.15).unwrap().row(0), &[1.0]);
        let d = rank_distribution(&[0.3, 0.3], 0.15).unwrap();
        assert_eq!(d.row(0), &[0.5, 0.5]);
        assert_eq!(d.row(1), &[0.5, 0.5]);
    }

    #[test]
    fn rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in 1..=9 {
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let d = rank_distribution(&scores, 0.15).unwrap();
            for s in d.row_sums() {
                assert!((s - 1.0).abs() < 1e-9);
            }
            assert!(d.rows().iter().flatten().all(|&p| (0.0..=1.0).contains(&p)));
        }
    }

    #[test]
    fn column_sums_under_independent_contests() {
        // each column holds the expected number of items at that rank
        for n in 1..=2 {
            let d = rank_distribution(&vec![0.25; n], 0.15).unwrap();
            assert!(d.column_sums().iter().all(|s| (s - 1.0).abs() < 1e-12));
        }
        let d = rank_distribution(&[0.25; 3], 0.15).unwrap();
        assert_eq!(d.column_sums(), vec![0.75, 1.5, 0.75]);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for n in 1..=9 {
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let total: f64 = rank_distribution(&scores, 0.15).unwrap().column_sums().iter().sum();
            assert!((total - n as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn matches_monte_carlo_for_three_items() {
        let scores = [0.12, -0.05, 0.2];
        let sigma = 0.15;
        let d = rank_distribution(&scores, sigma).unwrap();
        let draws = 1_000_000;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut counts = [[0u64; 3]; 3];
        for _ in 0..draws {
            for j in 0..3 {
                let mut rank = 0;
                for k in (0..3).filter(|&k| k != j) {
                    let p = pairwise_win_prob(scores[k], scores[j], sigma).unwrap();
                    if rng.random::<f64>() < p {
                        rank += 1;
                    }
                }
                counts[j][rank] += 1;
            }
        }
        for j in 0..3 {
            for r in 0..3 {
                let freq = counts[j][r] as f64 / draws as f64;
                let p = d.row(j)[r];
                let se = (p * (1.0 - p) / draws as f64).sqrt();
                assert!((freq - p).abs() <= 3.0 * se, "item {j} rank {r}: {freq} vs {p}");
            }
        }
    }

    #[test]
    fn two_equal_items_smoothed_ndcg() {
        let out = softrank_objective(&[1.0, 1.0], &[1.0, 0.0], 0.15).unwrap();
        let expected = 0.5 * (1.0 + 1.0 / 3f64.log2());
        assert!((-out.value - expected).abs() < 1e-9);
        assert!((expected - 0.81546).abs() < 1e-5);
    }

    #[test]
    fn invalid_inputs() {
        assert!(softrank_objective(&[1.0], &[1.0], -0.1).is_err());
        assert!(softrank_objective(&[], &[], 0.15).is_err());
        assert!(rank_distribution(&[], 0.15).is_err());
    }
}
