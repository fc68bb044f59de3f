//! Split-conformal classification: conformity scores, the finite-sample
//! quantile, and prediction-set construction for LAC, APS and RAPS.
//!
//! The three methods share one pipeline. Each calibration instance is scored
//! with the method's conformity score, the threshold `q_hat` is the
//! `ceil((1 - alpha)(n + 1))`-th smallest score, and a test instance's set is
//! read off its sorted softmax vector against `q_hat`. When that rank exceeds
//! `n` no finite threshold can honour the guarantee and the predictor emits
//! every class.

mod calibrate;
mod quantile;
mod score;
mod set;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use calibrate::{
    calibrate, holdout_split, tune_raps_lambda, LambdaTuning, DEFAULT_LAMBDA_GRID,
};
pub use quantile::{conformal_quantile, quantile_rank};
pub use score::{
    aps_score, conformity_score, lac_score, raps_score, softmax_entropy, sort_permutation,
    SortPermutation,
};
pub use set::{build_set, build_sets};

/// Default held-out fraction for RAPS lambda tuning and alpha selection.
pub const DEFAULT_SPLIT_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Lac,
    Aps,
    Raps,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Lac, Method::Aps, Method::Raps];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Lac => "lac",
            Method::Aps => "aps",
            Method::Raps => "raps",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lac" => Ok(Method::Lac),
            "aps" => Ok(Method::Aps),
            "raps" => Ok(Method::Raps),
            other => Err(Error::input(format!("unknown method {other:?}"))),
        }
    }
}

/// How APS/RAPS treat the class at which the cumulative score crosses
/// `q_hat`. LAC is unaffected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SetRule {
    /// `k = inf{k : cumulative score at rank k >= q_hat}`; the crossing class
    /// is always included. Never empty, coverage typically above `1 - alpha`.
    #[default]
    Inclusive,
    /// Keep exactly the classes whose own conformity score is `<= q_hat`.
    /// Coverage sits in `[1 - alpha, 1 - alpha + 1/(n + 1))` but sets may be
    /// empty.
    Threshold,
}

impl SetRule {
    pub fn as_str(self) -> &'static str {
        match self {
            SetRule::Inclusive => "inclusive",
            SetRule::Threshold => "threshold",
        }
    }
}

impl fmt::Display for SetRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SetRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "inclusive" => Ok(SetRule::Inclusive),
            "threshold" => Ok(SetRule::Threshold),
            other => Err(Error::input(format!("unknown set rule {other:?}"))),
        }
    }
}

/// Which conformity score to use, plus the RAPS penalty parameters.
///
/// `lambda` and `k_reg` only matter for RAPS; the constructors for LAC and
/// APS pin `lambda` to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodConfig<T> {
    pub method: Method,
    pub lambda: T,
    pub k_reg: usize,
    pub rule: SetRule,
}

impl<T: Scalar> MethodConfig<T> {
    pub fn lac() -> Self {
        Self {
            method: Method::Lac,
            lambda: T::zero(),
            k_reg: 1,
            rule: SetRule::Inclusive,
        }
    }

    pub fn aps() -> Self {
        Self {
            method: Method::Aps,
            ..Self::lac()
        }
    }

    pub fn raps(lambda: T, k_reg: usize) -> Self {
        Self {
            method: Method::Raps,
            lambda,
            k_reg,
            rule: SetRule::Inclusive,
        }
    }

    /// Default configuration for `method`; RAPS gets `lambda = 0.1, k_reg = 1`.
    pub fn for_method(method: Method) -> Self {
        match method {
            Method::Lac => Self::lac(),
            Method::Aps => Self::aps(),
            Method::Raps => Self::raps(T::of(0.1), 1),
        }
    }

    pub fn with_rule(mut self, rule: SetRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < T::zero() {
            return Err(Error::input(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if self.k_reg == 0 {
            return Err(Error::input("k_reg must be a positive integer"));
        }
        if self.method != Method::Raps && self.lambda != T::zero() {
            return Err(Error::input(format!(
                "lambda is only meaningful for raps, got {} for {}",
                self.lambda, self.method
            )));
        }
        Ok(())
    }

    /// RAPS penalty `lambda * (rank - k_reg)` for a 1-based sorted rank.
    pub(crate) fn penalty(&self, rank: usize) -> T {
        match self.method {
            Method::Raps => self.lambda * (T::of_usize(rank) - T::of_usize(self.k_reg)),
            _ => T::zero(),
        }
    }
}

/// Calibrated score threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold<T> {
    Finite(T),
    /// The quantile rank overflowed the calibration set: emit every class.
    FullSet,
}

impl<T: Scalar> Threshold<T> {
    pub fn finite(self) -> Option<T> {
        match self {
            Threshold::Finite(q) => Some(q),
            Threshold::FullSet => None,
        }
    }

    pub fn is_full_set(self) -> bool {
        matches!(self, Threshold::FullSet)
    }

    /// `score <= q_hat`, with the sentinel admitting every score.
    pub fn admits(self, score: T) -> bool {
        match self {
            Threshold::Finite(q) => score <= q,
            Threshold::FullSet => true,
        }
    }
}

/// Reusable calibration artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedPredictor<T> {
    pub config: MethodConfig<T>,
    pub alpha: T,
    pub q_hat: Threshold<T>,
    pub n_cal: usize,
    pub n_classes: usize,
}

/// Indices of the classes in one prediction set, ordered by descending
/// softmax probability (ties by ascending index).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct PredictionSet {
    classes: Vec<usize>,
}

impl PredictionSet {
    /// Builds a set from class indices; rejects duplicates. The caller's order
    /// is kept as-is.
    pub fn new(classes: Vec<usize>) -> Result<Self> {
        let mut seen = classes.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::input(format!(
                "duplicate class in prediction set {classes:?}"
            )));
        }
        Ok(Self { classes })
    }

    pub(crate) fn from_ordered(classes: Vec<usize>) -> Self {
        Self { classes }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn contains(&self, class: usize) -> bool {
        self.classes.contains(&class)
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.classes.iter().copied()
    }
}

pub(crate) fn check_alpha<T: Scalar>(alpha: T) -> Result<()> {
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(Error::input(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(())
}

pub(crate) fn check_label(label: usize, n_classes: usize) -> Result<()> {
    if label >= n_classes {
        return Err(Error::input(format!(
            "class index {label} out of range for {n_classes} classes"
        )));
    }
    Ok(())
}
