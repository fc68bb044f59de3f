use cpoverlap_core::ambiguity::OverlapProfile;
use cpoverlap_core::conformal::{build_sets, calibrate, MethodConfig};
use cpoverlap_core::metrics::{ece, EvaluationBatch};
use cpoverlap_core::synth::{expected_coverage_check, generate, trial_splits, SynthConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// `E[x^p (1-x)^q]` for `x ~ Beta(a, b)`.
fn beta_moment(a: f64, b: f64, p: f64, q: f64) -> f64 {
    (ln_beta(a + p, b + q) - ln_beta(a, b)).exp()
}

/// Closed-form moments of the panel statistics under a symmetric Dirichlet:
/// each class marginal is `Beta(c, (K-1)c)` and a pair of classes jointly
/// carries `Beta(2c, (K-2)c)` mass.
struct PanelOracle {
    overlap_mean: f64,
    overlap_var: f64,
    distinct_mean: f64,
    distinct_var: f64,
}

fn panel_oracle(k: usize, c: f64, n: usize) -> PanelOracle {
    let (kf, n) = (k as f64, n as f64);
    let rest = (kf - 1.0) * c;
    let miss_one = beta_moment(c, rest, 0.0, n);
    let miss_two = if k > 2 {
        beta_moment(2.0 * c, (kf - 2.0) * c, 0.0, n)
    } else {
        0.0
    };
    let unanimous = kf * beta_moment(c, rest, n, 0.0);
    let distinct_mean = kf * (1.0 - miss_one);
    let both_seen = 1.0 - 2.0 * miss_one + miss_two;
    let second = distinct_mean + kf * (kf - 1.0) * both_seen;
    PanelOracle {
        overlap_mean: 1.0 - unanimous,
        overlap_var: unanimous * (1.0 - unanimous),
        distinct_mean,
        distinct_var: second - distinct_mean * distinct_mean,
    }
}

fn regression_config() -> SynthConfig {
    SynthConfig {
        classes: 3,
        n_cal: 1000,
        n_test: 2000,
        concentration: 0.5,
        annotators: 50,
        seed: 0,
        ..SynthConfig::default()
    }
}

fn test_profile(cfg: &SynthConfig) -> OverlapProfile {
    let b = generate(cfg).unwrap();
    b.bundle
        .annotations
        .as_ref()
        .unwrap()
        .profile_for(&b.bundle.test.ids)
        .unwrap()
}

// frozen from the fixed-seed generator
const FROZEN_OVERLAP_FRACTION: f64 = 0.9655;
const FROZEN_MEAN_DISTINCT: f64 = 2.5965;

#[test]
fn oracle_matches_known_values() {
    let o = panel_oracle(3, 0.5, 50);
    // Beta(0.5, 1): E[p^50] = 0.5 / 50.5
    assert!((o.overlap_mean - (1.0 - 3.0 * 0.5 / 50.5)).abs() < 1e-12);
    // two classes, one annotator: never any overlap, exactly one label
    let o = panel_oracle(2, 1.3, 1);
    assert!(o.overlap_mean.abs() < 1e-12);
    assert!((o.distinct_mean - 1.0).abs() < 1e-12);
    assert!(o.distinct_var.abs() < 1e-12);
}

#[test]
fn fixed_seed_panel_statistics_are_frozen() {
    let p = test_profile(&regression_config());
    assert_eq!(p.overlap_fraction(), FROZEN_OVERLAP_FRACTION);
    assert_eq!(p.mean_distinct_labels(), FROZEN_MEAN_DISTINCT);
}

#[test]
fn frozen_constants_agree_with_the_oracle() {
    let o = panel_oracle(3, 0.5, 50);
    let n = 2000.0;
    let overlap_sd = (o.overlap_var / n).sqrt();
    let distinct_sd = (o.distinct_var / n).sqrt();
    assert!(
        (FROZEN_OVERLAP_FRACTION - o.overlap_mean).abs() < 4.0 * overlap_sd,
        "overlap {} vs {} (sd {overlap_sd})",
        FROZEN_OVERLAP_FRACTION,
        o.overlap_mean
    );
    assert!(
        (FROZEN_MEAN_DISTINCT - o.distinct_mean).abs() < 4.0 * distinct_sd,
        "distinct {} vs {} (sd {distinct_sd})",
        FROZEN_MEAN_DISTINCT,
        o.distinct_mean
    );
}

#[test]
fn generator_matches_oracle_across_settings() {
    for (k, c, annotators) in [(2, 1.0, 3), (4, 0.3, 10), (5, 2.0, 7), (10, 0.5, 50)] {
        let cfg = SynthConfig {
            classes: k,
            n_cal: 1,
            n_test: 4000,
            concentration: c,
            annotators,
            seed: 11,
            ..SynthConfig::default()
        };
        let p = test_profile(&cfg);
        let o = panel_oracle(k, c, annotators);
        let sd = (o.distinct_var / 4000.0).sqrt();
        assert!(
            (p.mean_distinct_labels() - o.distinct_mean).abs() < 4.0 * sd,
            "{k} {c}"
        );
        let sd = (o.overlap_var / 4000.0).sqrt();
        assert!(
            (p.overlap_fraction() - o.overlap_mean).abs() < 4.0 * sd.max(1e-9),
            "{k} {c}"
        );
    }
}

#[test]
fn distinct_counts_grow_with_concentration() {
    let low = test_profile(&SynthConfig {
        concentration: 0.2,
        ..regression_config()
    });
    let high = test_profile(&SynthConfig {
        concentration: 2.0,
        ..regression_config()
    });
    assert!(high.mean_distinct_labels() > low.mean_distinct_labels());
    // first-order stochastic dominance of the count distribution
    let (lh, hh) = (
        low.distinct_label_histogram(),
        high.distinct_label_histogram(),
    );
    let n = regression_config().n_test;
    for d in 1..=3 {
        let below = |h: &std::collections::BTreeMap<usize, usize>| -> usize {
            h.range(..=d).map(|(_, c)| c).sum()
        };
        assert!(below(&hh) <= below(&lh), "at {d}");
        assert!(below(&lh) <= n);
    }
    let oracle_low = panel_oracle(3, 0.2, 50).distinct_mean;
    let oracle_high = panel_oracle(3, 2.0, 50).distinct_mean;
    assert!(oracle_high > oracle_low);
}

#[test]
fn calibrated_emission_has_small_ece() {
    let cfg = SynthConfig {
        n_test: 5000,
        ..regression_config()
    };
    let b = generate(&cfg).unwrap();
    let pred = calibrate(
        &b.bundle.cal.probs,
        &b.bundle.cal.labels,
        MethodConfig::aps(),
        0.1,
    )
    .unwrap();
    let sets = build_sets(&b.bundle.test.probs, &pred).unwrap();
    let batch = EvaluationBatch::new(&sets, &b.bundle.test.labels)
        .unwrap()
        .with_probs(&b.bundle.test.probs)
        .unwrap();
    let calibrated = ece(&batch, 15).unwrap();
    assert!(calibrated < 0.05, "{calibrated}");

    let warped = generate(&SynthConfig {
        miscalibration: 2.0,
        ..cfg
    })
    .unwrap();
    let batch = EvaluationBatch::new(&sets, &warped.bundle.test.labels)
        .unwrap()
        .with_probs(&warped.bundle.test.probs)
        .unwrap();
    assert!(ece(&batch, 15).unwrap() > calibrated);
}

#[test]
fn deterministic_limit_covers_everything() {
    let cfg = SynthConfig {
        deterministic: true,
        n_cal: 200,
        n_test: 200,
        ..regression_config()
    };
    for m in [
        MethodConfig::lac(),
        MethodConfig::aps(),
        MethodConfig::raps(0.1, 1),
    ] {
        let check = expected_coverage_check(&cfg, m, 0.1, 5).unwrap();
        assert_eq!(check.mean, 1.0);
        assert_eq!(check.std_error, 0.0);
    }
}

#[test]
fn shuffling_does_not_change_coverage() {
    let cfg = SynthConfig {
        n_cal: 300,
        n_test: 300,
        ..regression_config()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for trial in 0..5 {
        let (cal, test) = trial_splits(&cfg, trial).unwrap();
        let mut ci: Vec<usize> = (0..cal.len()).collect();
        let mut ti: Vec<usize> = (0..test.len()).collect();
        ci.shuffle(&mut rng);
        ti.shuffle(&mut rng);
        let (cal2, test2) = (cal.select(&ci).unwrap(), test.select(&ti).unwrap());
        let coverage = |cal: &cpoverlap_core::dataio::Split<f64>,
                        test: &cpoverlap_core::dataio::Split<f64>| {
            let pred = calibrate(&cal.probs, &cal.labels, MethodConfig::aps(), 0.1).unwrap();
            let sets = build_sets(&test.probs, &pred).unwrap();
            sets.iter()
                .zip(&test.labels)
                .filter(|(s, &y)| s.contains(y))
                .count()
        };
        assert_eq!(coverage(&cal, &test), coverage(&cal2, &test2));
    }
}

#[test]
fn bundle_files_are_byte_identical_across_runs() {
    let cfg = SynthConfig {
        n_cal: 100,
        n_test: 80,
        annotators: 7,
        ..regression_config()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate(&cfg).unwrap().bundle.write(a.path()).unwrap();
    generate(&cfg).unwrap().bundle.write(b.path()).unwrap();
    for name in [
        "cal_probs.csv",
        "cal_labels.csv",
        "test_probs.csv",
        "test_labels.csv",
        "test_annotations.csv",
    ] {
        assert_eq!(
            std::fs::read(a.path().join(name)).unwrap(),
            std::fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}
