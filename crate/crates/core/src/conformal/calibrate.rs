use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::quantile::conformal_quantile;
use super::score::conformity_score;
use super::set::build_sets;
use super::{check_alpha, check_label, CalibratedPredictor, MethodConfig, SetRule};
use crate::error::{Error, Result};
use crate::probs::ProbabilityMatrix;
use crate::scalar::Scalar;

/// Lambda grid searched for RAPS.
pub const DEFAULT_LAMBDA_GRID: [f64; 5] = [0.001, 0.01, 0.1, 0.2, 0.5];

fn check_aligned<T>(probs: &ProbabilityMatrix<T>, labels: &[usize]) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::input("calibration set is empty"));
    }
    if probs.n_rows() != labels.len() {
        return Err(Error::input(format!(
            "{} probability rows but {} labels",
            probs.n_rows(),
            labels.len()
        )));
    }
    labels
        .iter()
        .try_for_each(|&y| check_label(y, probs.n_classes()))
}

/// Scores every calibration instance and takes the corrected quantile.
pub fn calibrate<T: Scalar>(
    probs: &ProbabilityMatrix<T>,
    labels: &[usize],
    config: MethodConfig<T>,
    alpha: T,
) -> Result<CalibratedPredictor<T>> {
    config.validate()?;
    check_alpha(alpha)?;
    check_aligned(probs, labels)?;
    let scores = probs
        .rows()
        .zip(labels)
        .map(|(row, &y)| conformity_score(row, y, &config))
        .collect::<Result<Vec<T>>>()?;
    Ok(CalibratedPredictor {
        config,
        alpha,
        q_hat: conformal_quantile(&scores, alpha)?,
        n_cal: labels.len(),
        n_classes: probs.n_classes(),
    })
}

/// Seeded split of `0..n` into `(retained, held_out)`, each ascending.
/// The held-out part has `round(n * fraction)` members.
pub fn holdout_split(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::input(format!(
            "split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let held = (n as f64 * fraction).round() as usize;
    if held == 0 || held >= n {
        return Err(Error::input(format!(
            "splitting {n} instances at fraction {fraction} leaves an empty part"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut held_out = idx[..held].to_vec();
    let mut retained = idx[held..].to_vec();
    held_out.sort_unstable();
    retained.sort_unstable();
    Ok((retained, held_out))
}

/// Outcome of the RAPS lambda search.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaTuning<T> {
    pub lambda: T,
    /// `(lambda, held-out coverage, held-out mean set size)` per grid value,
    /// in grid order.
    pub evaluations: Vec<(T, T, T)>,
}

/// Picks the RAPS `lambda` from `grid` on a seeded held-out slice of the
/// calibration data.
///
/// Each candidate is calibrated on the retained part and scored on the
/// held-out part. Among candidates reaching held-out coverage `>= 1 - alpha`
/// the smallest mean set size wins; if none reaches it, the highest coverage
/// wins. Remaining ties go to the smaller lambda.
#[allow(clippy::too_many_arguments)]
pub fn tune_raps_lambda<T: Scalar>(
    probs: &ProbabilityMatrix<T>,
    labels: &[usize],
    grid: &[T],
    alpha: T,
    split_fraction: f64,
    seed: u64,
    k_reg: usize,
    rule: SetRule,
) -> Result<LambdaTuning<T>> {
    if grid.is_empty() {
        return Err(Error::input("lambda grid is empty"));
    }
    check_alpha(alpha)?;
    check_aligned(probs, labels)?;
    let (retained, held_out) = holdout_split(labels.len(), split_fraction, seed)?;
    let fit_probs = probs.select(&retained)?;
    let fit_labels: Vec<usize> = retained.iter().map(|&i| labels[i]).collect();
    let eval_probs = probs.select(&held_out)?;
    let eval_labels: Vec<usize> = held_out.iter().map(|&i| labels[i]).collect();
    let n_eval = T::of_usize(eval_labels.len());

    let mut evaluations = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let cfg = MethodConfig::raps(lambda, k_reg).with_rule(rule);
        let pred = calibrate(&fit_probs, &fit_labels, cfg, alpha)?;
        let sets = build_sets(&eval_probs, &pred)?;
        let hits = sets
            .iter()
            .zip(&eval_labels)
            .filter(|(s, &y)| s.contains(y))
            .count();
        let total: usize = sets.iter().map(|s| s.len()).sum();
        evaluations.push((
            lambda,
            T::of_usize(hits) / n_eval,
            T::of_usize(total) / n_eval,
        ));
    }

    let target = T::one() - alpha;
    let any_valid = evaluations.iter().any(|e| e.1 >= target);
    let mut best: Option<(T, T, T)> = None;
    for &e in &evaluations {
        if any_valid && e.1 < target {
            continue;
        }
        let replace = match best {
            None => true,
            Some(b) => {
                let (ke, kb) = if any_valid { (e.2, b.2) } else { (-e.1, -b.1) };
                ke < kb || (ke == kb && e.0 < b.0)
            }
        };
        if replace {
            best = Some(e);
        }
    }
    let lambda = best.expect("grid is nonempty").0;
    Ok(LambdaTuning {
        lambda,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::Threshold;

    #[test]
    fn lac_example_threshold() {
        let probs = ProbabilityMatrix::from_rows(&[[0.9f64, 0.1], [0.8, 0.2], [0.4, 0.6]]).unwrap();
        let pred = calibrate(&probs, &[0, 0, 1], MethodConfig::lac(), 0.25).unwrap();
        let q = pred.q_hat.finite().unwrap();
        assert!((q - 0.4).abs() < 1e-12);
        assert_eq!(pred.n_cal, 3);
    }

    #[test]
    fn single_instance_overflows() {
        let probs = ProbabilityMatrix::from_rows(&[[0.9, 0.1]]).unwrap();
        for cfg in [
            MethodConfig::lac(),
            MethodConfig::aps(),
            MethodConfig::raps(0.1, 1),
        ] {
            let pred = calibrate(&probs, &[0], cfg, 0.05).unwrap();
            assert_eq!(pred.q_hat, Threshold::FullSet);
        }
    }

    #[test]
    fn raps_zero_lambda_matches_aps() {
        let probs = ProbabilityMatrix::from_rows(&[
            [0.6, 0.3, 0.1],
            [0.2, 0.5, 0.3],
            [0.1, 0.1, 0.8],
            [0.3, 0.3, 0.4],
        ])
        .unwrap();
        let labels = [0, 2, 2, 1];
        let aps = calibrate(&probs, &labels, MethodConfig::aps(), 0.3).unwrap();
        let raps = calibrate(&probs, &labels, MethodConfig::raps(0.0, 1), 0.3).unwrap();
        assert_eq!(aps.q_hat, raps.q_hat);
    }

    #[test]
    fn rejects_misaligned_or_invalid() {
        let probs = ProbabilityMatrix::from_rows(&[[0.9, 0.1], [0.5, 0.5]]).unwrap();
        assert!(calibrate(&probs, &[0], MethodConfig::lac(), 0.1).is_err());
        assert!(calibrate(&probs, &[0, 2], MethodConfig::lac(), 0.1).is_err());
        assert!(calibrate(&probs, &[], MethodConfig::lac(), 0.1).is_err());
        let bad = MethodConfig {
            lambda: 0.1,
            ..MethodConfig::aps()
        };
        assert!(calibrate(&probs, &[0, 1], bad, 0.1).is_err());
    }

    fn toy(n: usize) -> (ProbabilityMatrix<f64>, Vec<usize>) {
        let rows: Vec<[f64; 3]> = (0..n)
            .map(|i| match i % 3 {
                0 => [0.7, 0.2, 0.1],
                1 => [0.1, 0.6, 0.3],
                _ => [0.3, 0.3, 0.4],
            })
            .collect();
        let labels = (0..n).map(|i| (i * 7 % 5) % 3).collect();
        (ProbabilityMatrix::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn tuning_singleton_grid() {
        let (probs, labels) = toy(50);
        let t =
            tune_raps_lambda(&probs, &labels, &[0.0], 0.1, 0.2, 0, 1, SetRule::Inclusive).unwrap();
        assert_eq!(t.lambda, 0.0);
    }

    #[test]
    fn tuning_ties_go_to_smallest_lambda() {
        // one-hot rows: every lambda yields the same singleton sets
        let rows: Vec<[f64; 3]> = (0..40)
            .map(|i| {
                let mut r = [0.0; 3];
                r[i % 3] = 1.0;
                r
            })
            .collect();
        let labels: Vec<usize> = (0..40).map(|i| i % 3).collect();
        let probs = ProbabilityMatrix::from_rows(&rows).unwrap();
        let grid = DEFAULT_LAMBDA_GRID;
        let t =
            tune_raps_lambda(&probs, &labels, &grid, 0.1, 0.2, 3, 1, SetRule::Inclusive).unwrap();
        assert_eq!(t.lambda, 0.001);
        assert_eq!(t.evaluations.len(), 5);
        assert!(t
            .evaluations
            .windows(2)
            .all(|w| w[0].1 == w[1].1 && w[0].2 == w[1].2));
    }

    #[test]
    fn tuning_errors() {
        let (probs, labels) = toy(3);
        assert!(
            tune_raps_lambda(&probs, &labels, &[0.1], 0.1, 0.1, 0, 1, SetRule::Inclusive).is_err()
        );
        assert!(
            tune_raps_lambda(&probs, &labels, &[], 0.1, 0.5, 0, 1, SetRule::Inclusive).is_err()
        );
    }

    #[test]
    fn split_is_seeded_and_disjoint() {
        let (a, b) = holdout_split(100, 0.2, 7).unwrap();
        assert_eq!(b.len(), 20);
        assert_eq!(a.len(), 80);
        assert!(a.iter().all(|i| !b.contains(i)));
        assert_eq!(holdout_split(100, 0.2, 7).unwrap(), (a, b.clone()));
        assert_ne!(holdout_split(100, 0.2, 8).unwrap().1, b);
    }
}
