use super::annotations::OverlapProfile;
use super::spearman::{spearman_rs, CorrelationResult};
use crate::conformal::{softmax_entropy, PredictionSet};
use crate::error::{Error, Result};
use crate::probs::ProbabilityMatrix;
use crate::scalar::Scalar;

fn check_len(sets: usize, other: usize, what: &str) -> Result<()> {
    if sets != other {
        return Err(Error::input(format!(
            "{sets} prediction sets but {other} {what}"
        )));
    }
    Ok(())
}

fn correlate_filtered<T: Scalar>(
    pairs: impl Iterator<Item = (usize, T)>,
    keep: impl Fn(usize) -> bool,
) -> Result<CorrelationResult<T>> {
    let (sizes, other): (Vec<T>, Vec<T>) = pairs
        .filter(|&(size, _)| keep(size))
        .map(|(size, v)| (T::of_usize(size), v))
        .unzip();
    if sizes.len() < 2 {
        return Err(Error::input(format!(
            "need at least 2 usable instances for a correlation, got {}",
            sizes.len()
        )));
    }
    spearman_rs(&sizes, &other)
}

/// Spearman correlation between set size and the number of distinct human
/// labels. With `exclude_empty` instances whose set is empty are dropped.
pub fn correlate_with_overlap<T: Scalar>(
    sets: &[PredictionSet],
    profile: &OverlapProfile,
    exclude_empty: bool,
) -> Result<CorrelationResult<T>> {
    check_len(sets.len(), profile.len(), "overlap profiles")?;
    let pairs = sets
        .iter()
        .zip(&profile.instances)
        .map(|(s, o)| (s.len(), T::of_usize(o.distinct_label_count)));
    correlate_filtered(pairs, |size| !exclude_empty || size > 0)
}

/// Spearman correlation between set size and softmax entropy.
pub fn correlate_with_entropy<T: Scalar>(
    sets: &[PredictionSet],
    probs: &ProbabilityMatrix<T>,
    exclude_empty: bool,
) -> Result<CorrelationResult<T>> {
    check_len(sets.len(), probs.n_rows(), "probability rows")?;
    let pairs = sets
        .iter()
        .zip(probs.rows())
        .map(|(s, row)| (s.len(), softmax_entropy(row)));
    correlate_filtered(pairs, |size| !exclude_empty || size > 0)
}

/// One step of the size-capped correlation sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint<T> {
    pub cap: usize,
    /// Instances with `1 <= |set| <= cap`.
    pub n_used: usize,
    /// `None` when fewer than two instances qualify or either sequence is
    /// constant.
    pub result: Option<CorrelationResult<T>>,
}

/// Default caps `2..=max observed size` (just `[2]` when no set is larger).
pub fn default_size_caps(sets: &[PredictionSet]) -> Vec<usize> {
    let max = sets.iter().map(PredictionSet::len).max().unwrap_or(0);
    (2..=max.max(2)).collect()
}

/// Overlap correlation restricted to non-empty sets of size at most each cap.
pub fn incremental_sweep<T: Scalar>(
    sets: &[PredictionSet],
    profile: &OverlapProfile,
    caps: &[usize],
) -> Result<Vec<SweepPoint<T>>> {
    if caps.is_empty() {
        return Err(Error::input("size-cap list is empty"));
    }
    if caps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::input(format!(
            "size caps must be strictly ascending, got {caps:?}"
        )));
    }
    check_len(sets.len(), profile.len(), "overlap profiles")?;
    caps.iter()
        .map(|&cap| {
            let in_range = |size: usize| size >= 1 && size <= cap;
            let n_used = sets.iter().filter(|s| in_range(s.len())).count();
            let pairs = sets
                .iter()
                .zip(&profile.instances)
                .map(|(s, o)| (s.len(), T::of_usize(o.distinct_label_count)));
            let result = match correlate_filtered(pairs, in_range) {
                Ok(r) => Some(r),
                Err(Error::Undefined(_)) | Err(Error::Input(_)) => None,
                Err(e) => return Err(e),
            };
            Ok(SweepPoint {
                cap,
                n_used,
                result,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambiguity::InstanceOverlap;
    use std::collections::BTreeSet;

    fn profile(counts: &[usize]) -> OverlapProfile {
        OverlapProfile {
            instances: counts
                .iter()
                .map(|&c| InstanceOverlap::from_labels(&(0..c).collect::<BTreeSet<_>>()))
                .collect(),
        }
    }

    fn sets_of_sizes(sizes: &[usize]) -> Vec<PredictionSet> {
        sizes
            .iter()
            .map(|&s| PredictionSet::new((0..s).collect()).unwrap())
            .collect()
    }

    #[test]
    fn sizes_equal_counts_gives_one() {
        let sets = sets_of_sizes(&[1, 2, 3, 2, 1]);
        let r: CorrelationResult<f64> =
            correlate_with_overlap(&sets, &profile(&[1, 2, 3, 2, 1]), true).unwrap();
        assert_eq!(r.r_s, 1.0);
        assert_eq!(r.n_used, 5);
    }

    #[test]
    fn empty_sets_excluded() {
        let sets = sets_of_sizes(&[0, 1, 2, 3]);
        let prof = profile(&[3, 1, 2, 2]);
        let r: CorrelationResult<f64> = correlate_with_overlap(&sets, &prof, true).unwrap();
        assert_eq!(r.n_used, 3);
        let r: CorrelationResult<f64> = correlate_with_overlap(&sets, &prof, false).unwrap();
        assert_eq!(r.n_used, 4);
    }

    #[test]
    fn entropy_two_instances() {
        // entropies 0.0 and ln 3
        let probs =
            ProbabilityMatrix::from_rows(&[[1.0, 0.0, 0.0], [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]])
                .unwrap();
        let sets = sets_of_sizes(&[1, 3]);
        assert_eq!(
            correlate_with_entropy(&sets, &probs, true).unwrap().r_s,
            1.0
        );
        let constant = sets_of_sizes(&[2, 2]);
        assert!(matches!(
            correlate_with_entropy(&constant, &probs, true),
            Err(Error::Undefined(_))
        ));
    }

    #[test]
    fn too_few_usable() {
        let sets = sets_of_sizes(&[0, 0, 2]);
        assert!(matches!(
            correlate_with_overlap::<f64>(&sets, &profile(&[1, 2, 3]), true),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn sweep_filters_by_cap() {
        let sets = sets_of_sizes(&[1, 2, 3, 1, 2, 3, 0]);
        let prof = profile(&[1, 1, 3, 2, 2, 3, 1]);
        let sweep = incremental_sweep::<f64>(&sets, &prof, &[2, 3]).unwrap();
        assert_eq!(sweep[0].n_used, 4);
        let direct = spearman_rs(&[1.0, 2.0, 1.0, 2.0], &[1.0, 1.0, 2.0, 2.0]);
        assert!(direct.is_ok());
        assert_eq!(sweep[0].result, direct.ok());
        let full: CorrelationResult<f64> = correlate_with_overlap(&sets, &prof, true).unwrap();
        assert_eq!(sweep[1].result, Some(full));
    }

    #[test]
    fn sweep_marks_undefined() {
        let sets = sets_of_sizes(&[1, 1, 3]);
        let sweep = incremental_sweep::<f64>(&sets, &profile(&[1, 2, 3]), &[2, 3]).unwrap();
        assert_eq!(sweep[0].result, None);
        assert_eq!(sweep[0].n_used, 2);
        assert!(sweep[1].result.is_some());
        assert!(incremental_sweep::<f64>(&sets, &profile(&[1, 2, 3]), &[]).is_err());
        assert!(incremental_sweep::<f64>(&sets, &profile(&[1, 2, 3]), &[3, 2]).is_err());
    }

    #[test]
    fn default_caps() {
        assert_eq!(default_size_caps(&sets_of_sizes(&[1, 4, 2])), vec![2, 3, 4]);
        assert_eq!(default_size_caps(&sets_of_sizes(&[1, 1])), vec![2]);
    }
}
