use std::cmp::Ordering;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest sample for which [`PValueMethod::Permutation`] enumerates every
/// permutation instead of sampling.
pub const EXACT_PERMUTATION_MAX_N: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PValueMethod {
    /// Two-sided Student-t approximation with `n - 2` degrees of freedom.
    /// Unreliable for `n < 10`.
    #[default]
    TApproximation,
    /// Two-sided permutation test on the rank vectors: exhaustive up to
    /// [`EXACT_PERMUTATION_MAX_N`], otherwise `rounds` seeded shuffles.
    Permutation { rounds: usize, seed: u64 },
}

/// Conventional labels for `|r_s|`. The band edges are a convention, not
/// part of the statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strength {
    VeryWeak,
    Weak,
    Moderate,
    Strong,
    VeryStrong,
}

impl Strength {
    pub fn of(r: f64) -> Self {
        match r.abs() {
            a if a < 0.2 => Strength::VeryWeak,
            a if a < 0.4 => Strength::Weak,
            a if a < 0.6 => Strength::Moderate,
            a if a < 0.8 => Strength::Strong,
            _ => Strength::VeryStrong,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Strength::VeryWeak => "very weak",
            Strength::Weak => "weak",
            Strength::Moderate => "moderate",
            Strength::Strong => "strong",
            Strength::VeryStrong => "very strong",
        }
    }
}

impl fmt::Display for Strength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationResult<T> {
    pub r_s: T,
    pub p_value: T,
    pub n_used: usize,
}

impl<T: Scalar> CorrelationResult<T> {
    pub fn strength(&self) -> Strength {
        Strength::of(self.r_s.as_f64())
    }
}

/// 1-based ranks with ties replaced by their average rank.
pub fn average_ranks<T: Scalar>(values: &[T]) -> Vec<T> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![T::zero(); values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = T::of_usize(start + 1 + end) / T::of(2.0);
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

fn pearson<T: Scalar>(x: &[T], y: &[T]) -> T {
    let n = T::of_usize(x.len());
    let mx = x.iter().copied().fold(T::zero(), |a, b| a + b) / n;
    let my = y.iter().copied().fold(T::zero(), |a, b| a + b) / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    (sxy / (sxx * syy).sqrt()).max(-T::one()).min(T::one())
}

fn is_constant<T: Scalar>(v: &[T]) -> bool {
    v.iter().all(|&a| a == v[0])
}

/// Tie-corrected Spearman correlation with a two-sided t-approximation
/// p-value.
pub fn spearman_rs<T: Scalar>(x: &[T], y: &[T]) -> Result<CorrelationResult<T>> {
    spearman_with(x, y, PValueMethod::TApproximation)
}

pub fn spearman_with<T: Scalar>(
    x: &[T],
    y: &[T],
    p_method: PValueMethod,
) -> Result<CorrelationResult<T>> {
    if x.len() != y.len() {
        return Err(Error::input(format!(
            "rank correlation needs equal lengths, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::input(format!(
            "rank correlation needs n >= 2, got {n}"
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::input("rank correlation inputs must be finite"));
    }
    if is_constant(x) || is_constant(y) {
        return Err(Error::Undefined(
            "rank correlation of a constant sequence".to_string(),
        ));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let r = pearson(&rx, &ry);
    let p = match p_method {
        PValueMethod::TApproximation => t_p_value(r.as_f64(), n),
        PValueMethod::Permutation { rounds, seed } => {
            permutation_p_value(&rx, &ry, r, rounds, seed)
        }
    };
    Ok(CorrelationResult {
        r_s: r,
        p_value: T::of(p),
        n_used: n,
    })
}

fn t_p_value(r: f64, n: usize) -> f64 {
    if r.abs() >= 1.0 || n <= 2 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

fn permutation_p_value<T: Scalar>(rx: &[T], ry: &[T], r: T, rounds: usize, seed: u64) -> f64 {
    // permutations tying the observed statistic count as extreme
    let threshold = r.abs() - T::of(1e-12);
    let mut perm = ry.to_vec();
    if rx.len() <= EXACT_PERMUTATION_MAX_N {
        let (mut extreme, mut total) = (0usize, 0usize);
        heap_permutations(&mut perm, rx.len(), &mut |p| {
            total += 1;
            extreme += usize::from(pearson(rx, p).abs() >= threshold);
        });
        return extreme as f64 / total as f64;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut extreme = 0usize;
    for _ in 0..rounds {
        perm.shuffle(&mut rng);
        extreme += usize::from(pearson(rx, &perm).abs() >= threshold);
    }
    (extreme + 1) as f64 / (rounds + 1) as f64
}

fn heap_permutations<T: Copy>(v: &mut [T], k: usize, visit: &mut impl FnMut(&[T])) {
    if k <= 1 {
        visit(v);
        return;
    }
    for i in 0..k - 1 {
        heap_permutations(v, k - 1, visit);
        if k.is_multiple_of(2) {
            v.swap(i, k - 1);
        } else {
            v.swap(0, k - 1);
        }
    }
    heap_permutations(v, k - 1, visit);
}
