//! Synthetic exchangeable classification data with controllable class
//! overlap.
//!
//! Every instance gets a posterior drawn from a symmetric Dirichlet with the
//! configured concentration. The true label and each simulated annotator's
//! label are independent draws from that posterior, so small concentrations
//! give near one-hot posteriors and unanimous panels while large ones spread
//! the mass and the votes. The `deterministic` flag replaces the posterior by
//! a one-hot vector on a uniformly drawn class.
//!
//! Randomness comes from ChaCha8 seeded with `seed`. The base bundle uses
//! stream 0; coverage trial `t` uses stream `t + 1`, so trials are
//! reproducible and independent of execution order.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Gamma;
use rayon::prelude::*;

use crate::ambiguity::{AnnotationRecord, AnnotationTable};
use crate::conformal::{build_sets, calibrate, MethodConfig};
use crate::dataio::{DatasetBundle, Split};
use crate::error::{Error, Result};
use crate::probs::ProbabilityMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub classes: usize,
    pub n_cal: usize,
    pub n_test: usize,
    pub concentration: f64,
    pub annotators: usize,
    pub seed: u64,
    /// Exponent offset `m` of the emitted distortion `p^(1+m)`, renormalized.
    pub miscalibration: f64,
    pub deterministic: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 3,
            n_cal: 1000,
            n_test: 1000,
            concentration: 0.5,
            annotators: 50,
            seed: 0,
            miscalibration: 0.0,
            deterministic: false,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::input(format!(
                "need at least 2 classes, got {}",
                self.classes
            )));
        }
        if self.n_cal == 0 || self.n_test == 0 || self.annotators == 0 {
            return Err(Error::input(
                "n_cal, n_test and annotators must be positive",
            ));
        }
        if !(self.concentration > 0.0 && self.concentration.is_finite()) {
            return Err(Error::input(format!(
                "concentration must be positive and finite, got {}",
                self.concentration
            )));
        }
        if !(self.miscalibration >= 0.0 && self.miscalibration.is_finite()) {
            return Err(Error::input(format!(
                "miscalibration must be a finite value >= 0, got {}",
                self.miscalibration
            )));
        }
        Ok(())
    }

    pub fn class_names(&self) -> Vec<String> {
        (0..self.classes).map(|k| format!("class_{k}")).collect()
    }
}

/// Generated bundle plus the posteriors the labels were drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthBundle {
    pub bundle: DatasetBundle<f64>,
    pub cal_posteriors: ProbabilityMatrix<f64>,
    pub test_posteriors: ProbabilityMatrix<f64>,
}

struct Sampler {
    gamma: Gamma<f64>,
    cfg: SynthConfig,
}

struct DrawnSplit {
    posteriors: Vec<f64>,
    emitted: Vec<f64>,
    labels: Vec<usize>,
    votes: Vec<Vec<usize>>,
}

impl Sampler {
    fn new(cfg: &SynthConfig) -> Result<Self> {
        cfg.validate()?;
        let gamma = Gamma::new(cfg.concentration, 1.0)
            .map_err(|e| Error::input(format!("invalid concentration: {e}")))?;
        Ok(Self {
            gamma,
            cfg: cfg.clone(),
        })
    }

    fn posterior(&self, rng: &mut ChaCha8Rng, out: &mut Vec<f64>) {
        let k = self.cfg.classes;
        out.clear();
        if self.cfg.deterministic {
            let hot = rng.random_range(0..k);
            out.extend((0..k).map(|c| if c == hot { 1.0 } else { 0.0 }));
            return;
        }
        out.extend((0..k).map(|_| self.gamma.sample(rng)));
        let total: f64 = out.iter().sum();
        if total > 0.0 && total.is_finite() {
            out.iter_mut().for_each(|g| *g /= total);
        } else {
            // every gamma draw underflowed: the concentration-to-zero limit
            let hot = rng.random_range(0..k);
            out.iter_mut()
                .enumerate()
                .for_each(|(c, g)| *g = if c == hot { 1.0 } else { 0.0 });
        }
    }

    fn emit(&self, posterior: &[f64], out: &mut Vec<f64>) {
        let m = self.cfg.miscalibration;
        if m == 0.0 {
            out.extend_from_slice(posterior);
            return;
        }
        let start = out.len();
        out.extend(posterior.iter().map(|p| p.powf(1.0 + m)));
        let total: f64 = out[start..].iter().sum();
        out[start..].iter_mut().for_each(|p| *p /= total);
    }

    fn draw(&self, rng: &mut ChaCha8Rng, n: usize, annotate: bool) -> DrawnSplit {
        let k = self.cfg.classes;
        let mut split = DrawnSplit {
            posteriors: Vec::with_capacity(n * k),
            emitted: Vec::with_capacity(n * k),
            labels: Vec::with_capacity(n),
            votes: Vec::new(),
        };
        let mut post = Vec::with_capacity(k);
        for _ in 0..n {
            self.posterior(rng, &mut post);
            let dist = WeightedIndex::new(&post).expect("posterior has positive mass");
            split.labels.push(dist.sample(rng));
            if annotate {
                split
                    .votes
                    .push((0..self.cfg.annotators).map(|_| dist.sample(rng)).collect());
            }
            split.posteriors.extend_from_slice(&post);
            self.emit(&post, &mut split.emitted);
        }
        split
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn to_split(prefix: &str, drawn: &DrawnSplit, k: usize) -> Result<Split<f64>> {
    Ok(Split {
        ids: (0..drawn.labels.len())
            .map(|i| format!("{prefix}{i:06}"))
            .collect(),
        probs: ProbabilityMatrix::from_flat(drawn.emitted.clone(), k)?,
        labels: drawn.labels.clone(),
    })
}

/// Draws the calibration split, then the test split with its annotator panel.
pub fn generate(cfg: &SynthConfig) -> Result<SynthBundle> {
    let sampler = Sampler::new(cfg)?;
    let mut rng = rng_for(cfg.seed, 0);
    let cal = sampler.draw(&mut rng, cfg.n_cal, false);
    let test = sampler.draw(&mut rng, cfg.n_test, true);
    let k = cfg.classes;
    let test_split = to_split("test-", &test, k)?;
    let records = test_split
        .ids
        .iter()
        .zip(&test.votes)
        .flat_map(|(id, votes)| {
            votes
                .iter()
                .enumerate()
                .map(move |(a, &label)| AnnotationRecord {
                    instance: id.clone(),
                    annotator: format!("a{a:03}"),
                    label,
                })
        })
        .collect();
    let bundle = DatasetBundle {
        class_names: cfg.class_names(),
        cal: to_split("cal-", &cal, k)?,
        test: test_split,
        annotations: Some(AnnotationTable::new(records, k)?),
    };
    bundle.validate()?;
    Ok(SynthBundle {
        bundle,
        cal_posteriors: ProbabilityMatrix::from_flat(cal.posteriors, k)?,
        test_posteriors: ProbabilityMatrix::from_flat(test.posteriors, k)?,
    })
}

/// Calibration and test data for coverage trial `trial`, without annotators.
pub fn trial_splits(cfg: &SynthConfig, trial: u64) -> Result<(Split<f64>, Split<f64>)> {
    let sampler = Sampler::new(cfg)?;
    let mut rng = rng_for(cfg.seed, trial + 1);
    let cal = sampler.draw(&mut rng, cfg.n_cal, false);
    let test = sampler.draw(&mut rng, cfg.n_test, false);
    Ok((
        to_split("cal-", &cal, cfg.classes)?,
        to_split("test-", &test, cfg.classes)?,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageCheck {
    pub mean: f64,
    /// Sample standard deviation of the per-trial coverages over `sqrt(trials)`.
    pub std_error: f64,
    pub per_trial: Vec<f64>,
}

/// Test coverage of split-conformal sets over `trials` regenerated datasets.
pub fn expected_coverage_check(
    cfg: &SynthConfig,
    method: MethodConfig<f64>,
    alpha: f64,
    trials: usize,
) -> Result<CoverageCheck> {
    if trials == 0 {
        return Err(Error::input("trials must be at least 1"));
    }
    cfg.validate()?;
    method.validate()?;
    let per_trial = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let (cal, test) = trial_splits(cfg, t)?;
            let pred = calibrate(&cal.probs, &cal.labels, method, alpha)?;
            let sets = build_sets(&test.probs, &pred)?;
            let hits = sets
                .iter()
                .zip(&test.labels)
                .filter(|(s, &y)| s.contains(y))
                .count();
            Ok(hits as f64 / test.labels.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = per_trial.len() as f64;
    let mean = per_trial.iter().sum::<f64>() / n;
    let std_error = if per_trial.len() > 1 {
        let var = per_trial.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(CoverageCheck {
        mean,
        std_error,
        per_trial,
    })
}
