use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::error::{Error, Result};

pub const TEST_FRACTION: f64 = 0.30;
/// Fraction of the training portion held out for early stopping.
pub const VALIDATION_FRACTION: f64 = 0.10;

#[derive(Clone, Debug, PartialEq)]
pub struct HoldoutSplit {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

/// Sizes `(train, validation, test)` for `n` queries.
pub fn holdout_sizes(n: usize) -> (usize, usize, usize) {
    let test = (n as f64 * TEST_FRACTION).round() as usize;
    let rest = n - test;
    let validation = (rest as f64 * VALIDATION_FRACTION).round() as usize;
    (rest - validation, validation, test)
}

/// Random 63/7/30 split by whole queries. Within each part, queries keep
/// their original relative order.
pub fn split_holdout(ds: &Dataset, seed: u64) -> Result<HoldoutSplit> {
    let n = ds.len();
    if n < 10 {
        return Err(Error::contract(format!("hold-out split needs at least 10 queries, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (n_train, n_val, _) = holdout_sizes(n);
    let take = |idx: &[usize]| {
        let mut idx = idx.to_vec();
        idx.sort_unstable();
        Dataset::new(idx.into_iter().map(|i| ds.queries[i].clone()).collect())
    };
    Ok(HoldoutSplit {
        train: take(&order[..n_train]),
        validation: take(&order[n_train..n_train + n_val]),
        test: take(&order[n_train + n_val..]),
    })
}
