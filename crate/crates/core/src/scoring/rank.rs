use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A permutation of one query's items.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ranking {
    /// `order[p]` is the item placed at position `p + 1`.
    order: Vec<usize>,
    /// `positions[j]` is the 1-based position of item `j`.
    positions: Vec<usize>,
}

impl Ranking {
    /// Builds a ranking from an explicit placement order.
    pub fn from_order(order: Vec<usize>) -> Result<Self> {
        let mut positions = vec![0; order.len()];
        for (p, &item) in order.iter().enumerate() {
            if item >= order.len() || positions[item] != 0 {
                return Err(Error::Ranking(format!("{order:?} is not a permutation")));
            }
            positions[item] = p + 1;
        }
        Ok(Self { order, positions })
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn position_of(&self, item: usize) -> usize {
        self.positions[item]
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

/// Sorts items by descending score; equal scores keep ascending item index.
pub fn rank(scores: &[f64]) -> Result<Ranking> {
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::Ranking(format!("score of item {i} is NaN")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // stable sort keeps index order among ties
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("no NaN"));
    Ranking::from_order(order)
}
