use std::cmp::Ordering;

use super::{check_label, Method, MethodConfig};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Class indices sorted by descending probability, ties by ascending index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SortPermutation {
    order: Vec<usize>,
}

impl SortPermutation {
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// 1-based position of `class` in the sorted order.
    pub fn rank_of(&self, class: usize) -> Option<usize> {
        self.order.iter().position(|&c| c == class).map(|i| i + 1)
    }
}

pub fn sort_permutation<T: Scalar>(probs: &[T]) -> SortPermutation {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    // stable sort keeps ascending index among equal probabilities
    order.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).unwrap_or(Ordering::Equal));
    SortPermutation { order }
}

pub fn lac_score<T: Scalar>(probs: &[T], label: usize) -> Result<T> {
    check_label(label, probs.len())?;
    Ok(T::one() - probs[label])
}

/// Sum of the sorted probabilities down to and including `label`, together
/// with the label's 1-based rank.
fn cumulative_to<T: Scalar>(probs: &[T], label: usize) -> Result<(T, usize)> {
    check_label(label, probs.len())?;
    let perm = sort_permutation(probs);
    let mut acc = T::zero();
    for (i, &class) in perm.order.iter().enumerate() {
        acc = acc + probs[class];
        if class == label {
            return Ok((acc, i + 1));
        }
    }
    unreachable!("label {label} is a valid index and must appear in the permutation")
}

pub fn aps_score<T: Scalar>(probs: &[T], label: usize) -> Result<T> {
    cumulative_to(probs, label).map(|(acc, _)| acc)
}

/// APS score plus `lambda * (rank - k_reg)`. The penalty is negative when the
/// label ranks above `k_reg`.
pub fn raps_score<T: Scalar>(probs: &[T], label: usize, cfg: &MethodConfig<T>) -> Result<T> {
    if cfg.method != Method::Raps {
        return Err(Error::input(format!(
            "raps_score called with a {} configuration",
            cfg.method
        )));
    }
    let (acc, rank) = cumulative_to(probs, label)?;
    Ok(acc + cfg.penalty(rank))
}

/// Dispatches to the score function selected by `cfg.method`.
pub fn conformity_score<T: Scalar>(probs: &[T], label: usize, cfg: &MethodConfig<T>) -> Result<T> {
    match cfg.method {
        Method::Lac => lac_score(probs, label),
        Method::Aps => aps_score(probs, label),
        Method::Raps => raps_score(probs, label, cfg),
    }
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn softmax_entropy<T: Scalar>(probs: &[T]) -> T {
    probs
        .iter()
        .filter(|&&p| p > T::zero())
        .map(|&p| -p * p.ln())
        .fold(T::zero(), |acc, h| acc + h)
}
