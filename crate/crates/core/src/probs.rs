//! Validated softmax outputs.

use std::ops::Deref;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Absolute tolerance on `|sum(p) - 1|` for `f64` inputs. Narrower types get
/// a floor proportional to their machine epsilon and the class count.
pub const SUM_TOLERANCE: f64 = 1e-6;

fn sum_tolerance<T: Scalar>(k: usize) -> T {
    let floor = T::epsilon() * T::of_usize(4 * k.max(1));
    T::of(SUM_TOLERANCE).max(floor)
}

/// Checks the softmax invariants on one row: at least two classes, every
/// entry in `[0, 1]`, entries summing to one within tolerance.
pub fn validate_probabilities<T: Scalar>(probs: &[T]) -> std::result::Result<(), String> {
    if probs.len() < 2 {
        return Err(format!("need at least 2 classes, got {}", probs.len()));
    }
    for (j, &p) in probs.iter().enumerate() {
        if !p.is_finite() || p < T::zero() || p > T::one() {
            return Err(format!("probability {p} for class {j} outside [0, 1]"));
        }
    }
    let sum: T = probs.iter().copied().sum();
    if (sum - T::one()).abs() > sum_tolerance::<T>(probs.len()) {
        return Err(format!("probabilities sum to {sum}, expected 1"));
    }
    Ok(())
}

/// A single validated softmax vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector<T>(Vec<T>);

impl<T: Scalar> ProbabilityVector<T> {
    pub fn new(probs: Vec<T>) -> Result<Self> {
        validate_probabilities(&probs).map_err(Error::Input)?;
        Ok(Self(probs))
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

impl<T> Deref for ProbabilityVector<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.0
    }
}

/// Row-major `n x K` matrix of validated softmax vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix<T> {
    data: Vec<T>,
    n_classes: usize,
}

impl<T: Scalar> ProbabilityMatrix<T> {
    /// Builds a matrix from rows, validating each one and the shared width.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let n_classes = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or_else(|| Error::input("probability matrix has no rows"))?;
        let mut data = Vec::with_capacity(rows.len() * n_classes);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != n_classes {
                return Err(Error::input(format!(
                    "row {i} has {} classes, expected {n_classes}",
                    row.len()
                )));
            }
            validate_probabilities(row).map_err(|m| Error::input(format!("row {i}: {m}")))?;
            data.extend_from_slice(row);
        }
        Ok(Self { data, n_classes })
    }

    /// Builds from a flat buffer of `n * n_classes` entries.
    pub fn from_flat(data: Vec<T>, n_classes: usize) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::input(format!(
                "need at least 2 classes, got {n_classes}"
            )));
        }
        if data.is_empty() || !data.len().is_multiple_of(n_classes) {
            return Err(Error::input(format!(
                "flat buffer of length {} is not a nonempty multiple of {n_classes}",
                data.len()
            )));
        }
        for (i, row) in data.chunks_exact(n_classes).enumerate() {
            validate_probabilities(row).map_err(|m| Error::input(format!("row {i}: {m}")))?;
        }
        Ok(Self { data, n_classes })
    }

    /// Keeps the listed rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::input("row selection is empty"));
        }
        let mut data = Vec::with_capacity(rows.len() * self.n_classes);
        for &i in rows {
            if i >= self.n_rows() {
                return Err(Error::input(format!("row {i} out of range")));
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(Self {
            data,
            n_classes: self.n_classes,
        })
    }
}

impl<T> ProbabilityMatrix<T> {
    pub fn n_rows(&self) -> usize {
        self.data.len() / self.n_classes
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n_classes..(i + 1) * self.n_classes]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.data.chunks_exact(self.n_classes)
    }

    pub fn as_flat(&self) -> &[T] {
        &self.data
    }
}
