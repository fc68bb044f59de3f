use std::cmp::Ordering;

use super::{check_alpha, Threshold};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `ceil((1 - alpha)(n + 1))`.
///
/// Products within 1e-9 (relative) of an integer snap to it, so decimal
/// inputs such as `alpha = 0.05` do not gain a rank from binary rounding.
pub fn quantile_rank<T: Scalar>(n: usize, alpha: T) -> usize {
    let x = (1.0 - alpha.as_f64()) * (n as f64 + 1.0);
    let nearest = x.round();
    let r = if (x - nearest).abs() <= 1e-9 * x.abs().max(1.0) {
        nearest
    } else {
        x.ceil()
    };
    r.max(1.0) as usize
}

/// Finite-sample corrected `(1 - alpha)` quantile: the `r`-th smallest score
/// with `r = ceil((1 - alpha)(n + 1))`, or [`Threshold::FullSet`] if `r > n`.
pub fn conformal_quantile<T: Scalar>(scores: &[T], alpha: T) -> Result<Threshold<T>> {
    check_alpha(alpha)?;
    if scores.is_empty() {
        return Err(Error::input(
            "cannot take a conformal quantile of zero scores",
        ));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::input(format!("non-finite conformity score {bad}")));
    }
    let n = scores.len();
    let r = quantile_rank(n, alpha);
    if r > n {
        return Ok(Threshold::FullSet);
    }
    let mut work = scores.to_vec();
    let (_, q, _) =
        work.select_nth_unstable_by(r - 1, |a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    Ok(Threshold::Finite(*q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ten_scores_half_alpha() {
        let scores = [0.50, 0.45, 0.40, 0.35, 0.30, 0.25, 0.20, 0.15, 0.10, 0.05];
        assert_eq!(
            conformal_quantile(&scores, 0.5).unwrap(),
            Threshold::Finite(0.30)
        );
        assert_eq!(quantile_rank(10, 0.5), 6);
    }

    #[test]
    fn overflow_gives_full_set() {
        assert_eq!(
            conformal_quantile(&[0.1, 0.2, 0.3, 0.4], 0.05).unwrap(),
            Threshold::FullSet
        );
        assert_eq!(
            conformal_quantile(&[0.3], 0.05).unwrap(),
            Threshold::FullSet
        );
    }

    #[test]
    fn rank_equal_to_n_gives_max() {
        let scores = [0.9, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8];
        assert_eq!(quantile_rank(9, 0.1), 9);
        assert_eq!(
            conformal_quantile(&scores, 0.1).unwrap(),
            Threshold::Finite(0.9)
        );
    }

    #[test]
    fn decimal_alphas_do_not_bump_rank() {
        // (1 - 0.05) * 20 is 18.999999999999996 in binary floating point
        assert_eq!(quantile_rank(19, 0.05), 19);
        assert_eq!(quantile_rank(19, 0.05f32), 19);
        assert_eq!(quantile_rank(99, 0.1), 90);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(conformal_quantile::<f64>(&[], 0.1).is_err());
        assert!(conformal_quantile(&[0.1], 0.0).is_err());
        assert!(conformal_quantile(&[0.1], 1.0).is_err());
        assert!(conformal_quantile(&[f64::NAN], 0.5).is_err());
    }

    proptest! {
        #[test]
        fn matches_sorted_order_statistic(
            scores in prop::collection::vec(0.0f64..2.0, 1..200),
            a in 1u32..=50,
        ) {
            let alpha = a as f64 / 100.0;
            let n = scores.len();
            let r = ((100 - a as usize) * (n + 1)).div_ceil(100);
            let mut sorted = scores.clone();
            sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let expected = if r > n { Threshold::FullSet } else { Threshold::Finite(sorted[r - 1]) };
            prop_assert_eq!(conformal_quantile(&scores, alpha).unwrap(), expected);
        }
    }
}
