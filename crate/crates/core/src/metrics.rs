//! Set-valued and calibration metrics over one evaluation batch.
//!
//! Empty prediction sets are ordinary members of the batch here: they count
//! as size 0 and as misses. Only the annotation analyses drop them.

use std::collections::BTreeMap;

use crate::conformal::PredictionSet;
use crate::error::{Error, Result};
use crate::probs::ProbabilityMatrix;
use crate::scalar::Scalar;

/// Bin count for the expected calibration error.
pub const DEFAULT_ECE_BINS: usize = 15;

/// Aligned prediction sets, true labels and (optionally) the softmax rows
/// they came from. Guaranteed nonempty.
#[derive(Debug, Clone, Copy)]
pub struct EvaluationBatch<'a, T> {
    sets: &'a [PredictionSet],
    labels: &'a [usize],
    probs: Option<&'a ProbabilityMatrix<T>>,
}

impl<'a, T: Scalar> EvaluationBatch<'a, T> {
    pub fn new(sets: &'a [PredictionSet], labels: &'a [usize]) -> Result<Self> {
        if sets.is_empty() {
            return Err(Error::input("evaluation batch is empty"));
        }
        if sets.len() != labels.len() {
            return Err(Error::input(format!(
                "{} prediction sets but {} labels",
                sets.len(),
                labels.len()
            )));
        }
        Ok(Self {
            sets,
            labels,
            probs: None,
        })
    }

    /// Attaches the probability rows needed for [`ece`].
    pub fn with_probs(mut self, probs: &'a ProbabilityMatrix<T>) -> Result<Self> {
        if probs.n_rows() != self.labels.len() {
            return Err(Error::input(format!(
                "{} probability rows but {} labels",
                probs.n_rows(),
                self.labels.len()
            )));
        }
        if let Some(&y) = self.labels.iter().find(|&&y| y >= probs.n_classes()) {
            return Err(Error::input(format!(
                "label {y} out of range for {} classes",
                probs.n_classes()
            )));
        }
        self.probs = Some(probs);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn sets(&self) -> &'a [PredictionSet] {
        self.sets
    }

    pub fn labels(&self) -> &'a [usize] {
        self.labels
    }

    fn hits(&self) -> impl Iterator<Item = (usize, bool)> + 'a {
        self.sets
            .iter()
            .zip(self.labels)
            .map(|(s, &y)| (s.len(), s.contains(y)))
    }
}

/// Instances sharing one prediction-set size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeGroup<T> {
    pub size: usize,
    pub count: usize,
    pub coverage: T,
}

/// Per-bin reliability statistics behind the ECE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinStatistics<T> {
    pub bin_index: usize,
    pub count: usize,
    pub mean_confidence: T,
    pub accuracy: T,
}

/// Fraction of instances whose true label is in their set.
pub fn coverage<T: Scalar>(batch: &EvaluationBatch<'_, T>) -> T {
    let hits = batch.hits().filter(|&(_, hit)| hit).count();
    T::of_usize(hits) / T::of_usize(batch.len())
}

pub fn mean_set_size<T: Scalar>(batch: &EvaluationBatch<'_, T>) -> T {
    let total: usize = batch.sets.iter().map(PredictionSet::len).sum();
    T::of_usize(total) / T::of_usize(batch.len())
}

/// Exact count per observed set size, including size 0.
pub fn size_histogram<T: Scalar>(batch: &EvaluationBatch<'_, T>) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for s in batch.sets {
        *hist.entry(s.len()).or_insert(0) += 1;
    }
    hist
}

/// Coverage within each observed set size, by ascending size.
pub fn coverage_by_size<T: Scalar>(batch: &EvaluationBatch<'_, T>) -> Vec<SizeGroup<T>> {
    let mut tally: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for (size, hit) in batch.hits() {
        let entry = tally.entry(size).or_insert((0, 0));
        entry.0 += 1;
        entry.1 += usize::from(hit);
    }
    tally
        .into_iter()
        .map(|(size, (count, hits))| SizeGroup {
            size,
            count,
            coverage: T::of_usize(hits) / T::of_usize(count),
        })
        .collect()
}

/// Size-stratified coverage: the worst per-size-group coverage. Every
/// observed size forms its own group, however small.
pub fn ssc<T: Scalar>(batch: &EvaluationBatch<'_, T>) -> T {
    coverage_by_size(batch)
        .into_iter()
        .map(|g| g.coverage)
        .fold(T::one(), T::min)
}

fn confidence_and_prediction<T: Scalar>(row: &[T]) -> (T, usize) {
    let mut best = 0;
    for (j, &p) in row.iter().enumerate().skip(1) {
        if p > row[best] {
            best = j;
        }
    }
    (row[best], best)
}

/// Bin of a confidence in `[0, 1]` among `bins` equal-width bins; bins are
/// left-closed, right-open, except the last which also takes 1.0.
fn bin_of<T: Scalar>(conf: T, bins: usize) -> usize {
    let m = T::of_usize(bins);
    let edge = |b: usize| T::of_usize(b) / m;
    let mut b = (conf * m).floor().to_usize().unwrap_or(0).min(bins - 1);
    while b > 0 && conf < edge(b) {
        b -= 1;
    }
    while b + 1 < bins && conf >= edge(b + 1) {
        b += 1;
    }
    b
}

/// Reliability statistics for every bin (empty bins included, with zero
/// confidence and accuracy).
pub fn ece_bins<T: Scalar>(
    batch: &EvaluationBatch<'_, T>,
    bins: usize,
) -> Result<Vec<BinStatistics<T>>> {
    if bins == 0 {
        return Err(Error::input("ECE needs at least one bin"));
    }
    let probs = batch
        .probs
        .ok_or_else(|| Error::input("ECE needs the probability matrix attached to the batch"))?;
    let mut count = vec![0usize; bins];
    let mut correct = vec![0usize; bins];
    let mut conf_sum = vec![T::zero(); bins];
    for (row, &y) in probs.rows().zip(batch.labels) {
        let (conf, pred) = confidence_and_prediction(row);
        let b = bin_of(conf, bins);
        count[b] += 1;
        correct[b] += usize::from(pred == y);
        conf_sum[b] = conf_sum[b] + conf;
    }
    Ok((0..bins)
        .map(|b| {
            let (mean_confidence, accuracy) = if count[b] == 0 {
                (T::zero(), T::zero())
            } else {
                let c = T::of_usize(count[b]);
                (conf_sum[b] / c, T::of_usize(correct[b]) / c)
            };
            BinStatistics {
                bin_index: b,
                count: count[b],
                mean_confidence,
                accuracy,
            }
        })
        .collect())
}

/// Expected calibration error of the top-1 prediction over `bins` equal-width
/// confidence bins. Ties in the argmax go to the lowest class index.
pub fn ece<T: Scalar>(batch: &EvaluationBatch<'_, T>, bins: usize) -> Result<T> {
    let stats = ece_bins(batch, bins)?;
    let n = T::of_usize(batch.len());
    Ok(stats
        .iter()
        .filter(|s| s.count > 0)
        .fold(T::zero(), |acc, s| {
            acc + T::of_usize(s.count) / n * (s.accuracy - s.mean_confidence).abs()
        }))
}

/// Top-1 accuracy of the attached probabilities.
pub fn top1_accuracy<T: Scalar>(batch: &EvaluationBatch<'_, T>) -> Result<T> {
    let probs = batch.probs.ok_or_else(|| {
        Error::input("accuracy needs the probability matrix attached to the batch")
    })?;
    let correct = probs
        .rows()
        .zip(batch.labels)
        .filter(|(row, &y)| confidence_and_prediction(row).1 == y)
        .count();
    Ok(T::of_usize(correct) / T::of_usize(batch.len()))
}
