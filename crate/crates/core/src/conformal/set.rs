use rayon::prelude::*;

use super::score::sort_permutation;
use super::{CalibratedPredictor, Method, PredictionSet, SetRule, Threshold};
use crate::error::{Error, Result};
use crate::probs::ProbabilityMatrix;
use crate::scalar::Scalar;

/// Prediction set for one softmax vector.
///
/// * LAC keeps every class whose score `1 - p[y]` is at most `q_hat`; the
///   result may be empty.
/// * APS/RAPS walk the sorted classes accumulating probability (plus the RAPS
///   penalty). Under [`SetRule::Inclusive`] they stop at the first rank whose
///   running score reaches `q_hat`; under [`SetRule::Threshold`] they keep the
///   ranks whose running score stays at or below `q_hat`.
/// * [`Threshold::FullSet`] yields all classes for every method.
pub fn build_set<T: Scalar>(probs: &[T], pred: &CalibratedPredictor<T>) -> Result<PredictionSet> {
    if probs.len() != pred.n_classes {
        return Err(Error::input(format!(
            "probability vector has {} classes, predictor was calibrated on {}",
            probs.len(),
            pred.n_classes
        )));
    }
    let order = sort_permutation(probs).order().to_vec();
    let q = match pred.q_hat {
        Threshold::FullSet => return Ok(PredictionSet::from_ordered(order)),
        Threshold::Finite(q) => q,
    };
    let cfg = &pred.config;
    let keep = match cfg.method {
        Method::Lac => {
            let classes = order
                .into_iter()
                .filter(|&c| T::one() - probs[c] <= q)
                .collect();
            return Ok(PredictionSet::from_ordered(classes));
        }
        Method::Aps | Method::Raps => {
            let mut acc = T::zero();
            let mut keep = match cfg.rule {
                SetRule::Inclusive => order.len(),
                SetRule::Threshold => 0,
            };
            for (i, &class) in order.iter().enumerate() {
                acc = acc + probs[class];
                let score = acc + cfg.penalty(i + 1);
                match cfg.rule {
                    SetRule::Inclusive if score >= q => {
                        keep = i + 1;
                        break;
                    }
                    SetRule::Threshold if score <= q => keep = i + 1,
                    SetRule::Threshold => break,
                    SetRule::Inclusive => {}
                }
            }
            keep
        }
    };
    let mut order = order;
    order.truncate(keep);
    Ok(PredictionSet::from_ordered(order))
}

/// Sets for every row; rows are processed in parallel, output order matches
/// input order.
pub fn build_sets<T: Scalar>(
    probs: &ProbabilityMatrix<T>,
    pred: &CalibratedPredictor<T>,
) -> Result<Vec<PredictionSet>> {
    let rows: Vec<&[T]> = probs.rows().collect();
    rows.par_iter().map(|row| build_set(row, pred)).collect()
}
