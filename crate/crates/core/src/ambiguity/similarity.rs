use super::annotations::OverlapProfile;
use crate::conformal::PredictionSet;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Mean agreement between prediction sets and human label sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityReport<T> {
    pub precision: T,
    pub recall: T,
    pub subset_accuracy: T,
    pub hamming_loss: T,
    pub n_used: usize,
}

/// Per-instance precision `|C & H| / |C|`, recall `|C & H| / |H|`,
/// subset accuracy `[C == H]` and Hamming loss `|C ^ H| / K`, averaged over
/// the used instances. An empty `C` (only reachable with
/// `exclude_empty = false`) scores precision 0.
pub fn similarity<T: Scalar>(
    sets: &[PredictionSet],
    profile: &OverlapProfile,
    n_classes: usize,
    exclude_empty: bool,
) -> Result<SimilarityReport<T>> {
    if sets.len() != profile.len() {
        return Err(Error::input(format!(
            "{} prediction sets but {} overlap profiles",
            sets.len(),
            profile.len()
        )));
    }
    if n_classes == 0 {
        return Err(Error::input("class count must be positive"));
    }
    let k = T::of_usize(n_classes);
    let (mut precision, mut recall, mut subset, mut hamming) =
        (T::zero(), T::zero(), T::zero(), T::zero());
    let mut n_used = 0usize;
    for (set, overlap) in sets.iter().zip(&profile.instances) {
        if exclude_empty && set.is_empty() {
            continue;
        }
        let human = &overlap.label_set;
        let mut predicted = set.classes().to_vec();
        predicted.sort_unstable();
        let both = predicted
            .iter()
            .filter(|c| human.binary_search(c).is_ok())
            .count();
        let sym_diff = predicted.len() + human.len() - 2 * both;
        if !predicted.is_empty() {
            precision = precision + T::of_usize(both) / T::of_usize(predicted.len());
        }
        recall = recall + T::of_usize(both) / T::of_usize(human.len());
        if predicted == *human {
            subset = subset + T::one();
        }
        hamming = hamming + T::of_usize(sym_diff) / k;
        n_used += 1;
    }
    if n_used == 0 {
        return Err(Error::input(
            "no usable instances for the similarity analysis",
        ));
    }
    let n = T::of_usize(n_used);
    Ok(SimilarityReport {
        precision: precision / n,
        recall: recall / n,
        subset_accuracy: subset / n,
        hamming_loss: hamming / n,
        n_used,
    })
}
