use std::path::{Path, PathBuf};

use cpoverlap_core::ambiguity::{
    correlate_with_entropy, correlate_with_overlap, default_size_caps, incremental_sweep,
    similarity, AnnotationTable, CorrelationResult, OverlapProfile,
};
use cpoverlap_core::conformal::{
    build_sets, calibrate, holdout_split, tune_raps_lambda, DEFAULT_LAMBDA_GRID,
    DEFAULT_SPLIT_FRACTION,
};
use cpoverlap_core::dataio::{
    load_annotations, load_probabilities, load_split, read_predictor, render_report,
    write_predictor, write_text, AlphaCandidate, AlphaSweepSection, CorrelationEntry,
    CorrelationSection, DistinctLabelCount, EvaluationReport, HistogramSection, PerformanceSection,
    PredictorArtifact, ReliabilityBin, RunManifest, SimilaritySection, SizeCount, SizeCoverage,
    Split, SweepEntry, CAL_LABELS, CAL_PROBS, TEST_ANNOTATIONS, TEST_LABELS, TEST_PROBS,
};
use cpoverlap_core::metrics::{
    coverage, coverage_by_size, ece, ece_bins, mean_set_size, size_histogram, ssc, top1_accuracy,
    EvaluationBatch,
};
use cpoverlap_core::synth::{generate, SynthConfig};
use cpoverlap_core::{Config, Error, Method, PredictionSet, Predictor, Result, Threshold};

use crate::args::{
    AnalysisArgs, CalibrateArgs, DataArgs, EvaluateArgs, MethodArgs, PredictArgs, PredictorSource,
    SelectOn, SweepAlphaArgs, SynthArgs,
};

/// How a command that ran to completion ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Done,
    /// Outputs were written but the headline statistic is undefined.
    Undefined(String),
}

fn input(message: impl Into<String>) -> Error {
    Error::Input(message.into())
}

fn resolve(data: &DataArgs, explicit: &Option<PathBuf>, name: &str, flag: &str) -> Result<PathBuf> {
    match (explicit, &data.bundle) {
        (Some(p), _) => Ok(p.clone()),
        (None, Some(dir)) => Ok(dir.join(name)),
        (None, None) => Err(input(format!("missing --{flag} (or --bundle)"))),
    }
}

struct Loaded {
    class_names: Vec<String>,
    split: Split<f64>,
}

fn load_labeled(
    data: &DataArgs,
    manifest: &mut RunManifest,
    probs: (&Option<PathBuf>, &str, &str),
    labels: (&Option<PathBuf>, &str, &str),
) -> Result<Loaded> {
    let probs_path = resolve(data, probs.0, probs.1, probs.2)?;
    let labels_path = resolve(data, labels.0, labels.1, labels.2)?;
    let loaded = load_probabilities::<f64>(&probs_path)?;
    manifest.add_input(&probs_path)?;
    manifest.add_input(&labels_path)?;
    let class_names = loaded.class_names.clone();
    let split = load_split(loaded, &labels_path)?;
    Ok(Loaded { class_names, split })
}

fn load_cal(data: &DataArgs, manifest: &mut RunManifest) -> Result<Loaded> {
    load_labeled(
        data,
        manifest,
        (&data.cal_probs, CAL_PROBS, "cal-probs"),
        (&data.cal_labels, CAL_LABELS, "cal-labels"),
    )
}

fn load_test(
    data: &DataArgs,
    manifest: &mut RunManifest,
    class_names: &[String],
) -> Result<Split<f64>> {
    let test = load_labeled(
        data,
        manifest,
        (&data.test_probs, TEST_PROBS, "test-probs"),
        (&data.test_labels, TEST_LABELS, "test-labels"),
    )?;
    if test.class_names != class_names {
        return Err(input(format!(
            "test classes {:?} differ from {:?}",
            test.class_names, class_names
        )));
    }
    Ok(test.split)
}

fn load_annotation_table(
    data: &DataArgs,
    manifest: &mut RunManifest,
    class_names: &[String],
    test_ids: &[String],
) -> Result<AnnotationTable> {
    let path = resolve(data, &data.annotations, TEST_ANNOTATIONS, "annotations")?;
    let table = load_annotations(&path, class_names, Some(test_ids))?;
    manifest.add_input(&path)?;
    Ok(table)
}

/// Annotations when they are available, without requiring them.
fn optional_annotations(
    data: &DataArgs,
    manifest: &mut RunManifest,
    class_names: &[String],
    test_ids: &[String],
) -> Result<Option<AnnotationTable>> {
    let present = match (&data.annotations, &data.bundle) {
        (Some(_), _) => true,
        (None, Some(dir)) => dir.join(TEST_ANNOTATIONS).exists(),
        (None, None) => false,
    };
    if present {
        load_annotation_table(data, manifest, class_names, test_ids).map(Some)
    } else {
        Ok(None)
    }
}

fn record_method(manifest: &mut RunManifest, m: &MethodArgs) {
    let method: Method = m.method.into();
    manifest.method = Some(method.as_str().to_string());
    manifest.set_rule = Some(
        cpoverlap_core::SetRule::from(m.set_rule)
            .as_str()
            .to_string(),
    );
    manifest.k_reg = (method == Method::Raps).then_some(m.k_reg);
    manifest.seed = Some(m.seed);
}

/// Calibrates on `cal`, tuning the RAPS penalty on a seeded holdout when no
/// lambda was given.
pub fn fit_predictor(cal: &Split<f64>, m: &MethodArgs, alpha: f64) -> Result<Predictor> {
    let method: Method = m.method.into();
    let rule = m.set_rule.into();
    let config = match (method, m.lambda) {
        (Method::Raps, Some(lambda)) => Config::raps(lambda, m.k_reg),
        (Method::Raps, None) => {
            let grid = m
                .lambda_grid
                .clone()
                .unwrap_or_else(|| DEFAULT_LAMBDA_GRID.to_vec());
            let tuned = tune_raps_lambda(
                &cal.probs,
                &cal.labels,
                &grid,
                alpha,
                DEFAULT_SPLIT_FRACTION,
                m.seed,
                m.k_reg,
                rule,
            )?;
            Config::raps(tuned.lambda, m.k_reg)
        }
        (_, Some(_)) => {
            return Err(input(format!(
                "--lambda only applies to raps, not {method}"
            )))
        }
        (_, None) => Config::for_method(method),
    };
    calibrate(&cal.probs, &cal.labels, config.with_rule(rule), alpha)
}

fn finish_manifest(manifest: &mut RunManifest, pred: &Predictor) {
    manifest.alpha = Some(pred.alpha);
    manifest.lambda = (pred.config.method == Method::Raps).then_some(pred.config.lambda);
    manifest.method = Some(pred.config.method.as_str().to_string());
    manifest.set_rule = Some(pred.config.rule.as_str().to_string());
    manifest.k_reg = (pred.config.method == Method::Raps).then_some(pred.config.k_reg);
}

/// Loads the stored predictor or calibrates one from the calibration split.
fn obtain_predictor(
    data: &DataArgs,
    source: &PredictorSource,
    manifest: &mut RunManifest,
) -> Result<(Vec<String>, Predictor)> {
    if let Some(path) = &source.predictor {
        let artifact = read_predictor(path)?;
        manifest.add_input(path)?;
        let pred = artifact.to_predictor::<f64>()?;
        manifest.seed = artifact.manifest.as_ref().and_then(|m| m.seed);
        finish_manifest(manifest, &pred);
        return Ok((artifact.class_names, pred));
    }
    record_method(manifest, &source.method);
    let cal = load_cal(data, manifest)?;
    let pred = fit_predictor(&cal.split, &source.method, source.alpha)?;
    finish_manifest(manifest, &pred);
    Ok((cal.class_names, pred))
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_text(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_report(out: &Option<PathBuf>, report: &EvaluationReport) -> Result<()> {
    emit(out, &render_report(report)?)
}

pub fn synth(args: &SynthArgs) -> Result<Outcome> {
    let cfg = SynthConfig {
        classes: args.classes,
        n_cal: args.n_cal,
        n_test: args.n_test,
        concentration: args.concentration,
        annotators: args.annotators,
        seed: args.seed,
        miscalibration: args.miscalibration,
        deterministic: args.deterministic,
    };
    let generated = generate(&cfg)?;
    generated.bundle.write(&args.out)?;
    let mut manifest = RunManifest::new("synth")
        .parameter("classes", cfg.classes)
        .parameter("n_cal", cfg.n_cal)
        .parameter("n_test", cfg.n_test)
        .parameter("concentration", cfg.concentration)
        .parameter("annotators", cfg.annotators)
        .parameter("miscalibration", cfg.miscalibration)
        .parameter("deterministic", cfg.deterministic);
    manifest.seed = Some(cfg.seed);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write_text(args.out.join("manifest.json"), &text)?;
    Ok(Outcome::Done)
}

pub fn calibrate_cmd(args: &CalibrateArgs) -> Result<Outcome> {
    let mut manifest = RunManifest::new("calibrate");
    record_method(&mut manifest, &args.method);
    let cal = load_cal(&args.data, &mut manifest)?;
    let pred = fit_predictor(&cal.split, &args.method, args.alpha)?;
    finish_manifest(&mut manifest, &pred);
    let mut artifact = PredictorArtifact::from_predictor(&pred, &cal.class_names);
    artifact.manifest = Some(manifest);
    match &args.out {
        Some(path) => write_predictor(&artifact, path)?,
        None => println!("{}", serde_json::to_string_pretty(&artifact)?),
    }
    Ok(Outcome::Done)
}

fn sets_csv(ids: &[String], sets: &[PredictionSet], class_names: &[String]) -> String {
    let quote = |field: &str| {
        if field.contains([',', '"', '\n', '\r']) {
            format!("\"{}\"", field.replace('"', "\"\""))
        } else {
            field.to_string()
        }
    };
    let mut text = String::from("id,size,set\n");
    for (id, set) in ids.iter().zip(sets) {
        let members: Vec<&str> = set.iter().map(|c| class_names[c].as_str()).collect();
        text.push_str(&format!(
            "{},{},{}\n",
            quote(id),
            set.len(),
            quote(&members.join(";"))
        ));
    }
    text
}

pub fn predict(args: &PredictArgs) -> Result<Outcome> {
    let mut manifest = RunManifest::new("predict");
    let artifact = read_predictor(&args.predictor)?;
    manifest.add_input(&args.predictor)?;
    let pred = artifact.to_predictor::<f64>()?;
    finish_manifest(&mut manifest, &pred);
    let probs_path = resolve(&args.data, &args.data.test_probs, TEST_PROBS, "test-probs")?;
    let probs = load_probabilities::<f64>(&probs_path)?;
    manifest.add_input(&probs_path)?;
    if probs.class_names != artifact.class_names {
        return Err(input(format!(
            "probability classes {:?} differ from the predictor's {:?}",
            probs.class_names, artifact.class_names
        )));
    }
    let sets = build_sets(&probs.probs, &pred)?;
    let empty = sets.iter().filter(|s| s.is_empty()).count();
    let manifest = manifest.parameter("empty_sets", empty);
    let text = sets_csv(&probs.ids, &sets, &probs.class_names);
    match &args.out {
        Some(path) => {
            write_text(path, &text)?;
            let mut side = serde_json::to_string_pretty(&manifest)?;
            side.push('\n');
            write_text(manifest_path(path), &side)?;
        }
        None => print!("{text}"),
    }
    Ok(Outcome::Done)
}

/// `<out>.manifest.json` next to a non-JSON output.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn performance(
    pred: &Predictor,
    test: &Split<f64>,
    sets: &[PredictionSet],
    bins: usize,
) -> Result<PerformanceSection> {
    let batch = EvaluationBatch::new(sets, &test.labels)?.with_probs(&test.probs)?;
    Ok(PerformanceSection {
        n: test.len(),
        accuracy: top1_accuracy(&batch)?,
        coverage: coverage(&batch),
        ssc: ssc(&batch),
        mean_set_size: mean_set_size(&batch),
        ece: ece(&batch, bins)?,
        ece_bins: bins,
        empty_sets: sets.iter().filter(|s| s.is_empty()).count(),
        q_hat: match pred.q_hat {
            Threshold::Finite(q) => Some(q),
            Threshold::FullSet => None,
        },
        n_cal: pred.n_cal,
    })
}

fn size_counts(sets: &[PredictionSet]) -> Vec<SizeCount> {
    let mut counts = std::collections::BTreeMap::new();
    for s in sets {
        *counts.entry(s.len()).or_insert(0usize) += 1;
    }
    counts
        .into_iter()
        .map(|(size, count)| SizeCount { size, count })
        .collect()
}

fn distinct_counts(profile: &OverlapProfile) -> Vec<DistinctLabelCount> {
    profile
        .distinct_label_histogram()
        .into_iter()
        .map(|(distinct_labels, count)| DistinctLabelCount {
            distinct_labels,
            count,
        })
        .collect()
}

pub fn evaluate(args: &EvaluateArgs) -> Result<Outcome> {
    let mut manifest = RunManifest::new("evaluate")
        .parameter("bins", args.bins)
        .parameter("exclude_empty", false);
    let (class_names, pred) = obtain_predictor(&args.data, &args.source, &mut manifest)?;
    let test = load_test(&args.data, &mut manifest, &class_names)?;
    let annotations = optional_annotations(&args.data, &mut manifest, &class_names, &test.ids)?;
    let sets = build_sets(&test.probs, &pred)?;
    let batch = EvaluationBatch::new(&sets, &test.labels)?.with_probs(&test.probs)?;
    let histograms = HistogramSection {
        set_size: size_histogram(&batch)
            .into_iter()
            .map(|(size, count)| SizeCount { size, count })
            .collect(),
        coverage_by_size: coverage_by_size(&batch)
            .into_iter()
            .map(|g| SizeCoverage {
                size: g.size,
                count: g.count,
                coverage: g.coverage,
            })
            .collect(),
        distinct_labels: match &annotations {
            Some(table) => distinct_counts(&table.profile_for(&test.ids)?),
            None => Vec::new(),
        },
        reliability: ece_bins(&batch, args.bins)?
            .into_iter()
            .map(|b| ReliabilityBin {
                bin: b.bin_index,
                count: b.count,
                mean_confidence: b.mean_confidence,
                accuracy: b.accuracy,
            })
            .collect(),
    };
    let mut report = EvaluationReport::new(manifest);
    report.performance = Some(performance(&pred, &test, &sets, args.bins)?);
    report.histograms = Some(histograms);
    emit_report(&args.out, &report)?;
    Ok(Outcome::Done)
}

/// Data shared by the two annotation analyses.
struct Analysis {
    manifest: RunManifest,
    class_names: Vec<String>,
    test: Split<f64>,
    table: AnnotationTable,
    profile: OverlapProfile,
    sets: Vec<PredictionSet>,
}

fn prepare_analysis(command: &str, args: &AnalysisArgs) -> Result<Analysis> {
    let mut manifest = RunManifest::new(command).parameter("exclude_empty", args.exclude_empty);
    let (class_names, pred) = obtain_predictor(&args.data, &args.source, &mut manifest)?;
    let test = load_test(&args.data, &mut manifest, &class_names)?;
    let table = load_annotation_table(&args.data, &mut manifest, &class_names, &test.ids)?;
    let profile = table.profile_for(&test.ids)?;
    let sets = build_sets(&test.probs, &pred)?;
    Ok(Analysis {
        manifest,
        class_names,
        test,
        table,
        profile,
        sets,
    })
}

fn n_usable(sets: &[PredictionSet], exclude_empty: bool) -> usize {
    sets.iter()
        .filter(|s| !exclude_empty || !s.is_empty())
        .count()
}

/// Undefined statistics become `None`; anything else is a real error.
fn defined<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::Undefined(_)) | Err(Error::Input(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn correlation_entry(
    result: Option<CorrelationResult<f64>>,
    n_used: usize,
    n: usize,
) -> CorrelationEntry {
    CorrelationEntry {
        r_s: result.map(|r| r.r_s),
        p_value: result.map(|r| r.p_value),
        n_used,
        n_excluded: n - n_used,
        strength: result.map(|r| r.strength().to_string()),
    }
}

pub fn correlate(args: &AnalysisArgs) -> Result<Outcome> {
    let a = prepare_analysis("correlate", args)?;
    let n = a.sets.len();
    let used = n_usable(&a.sets, args.exclude_empty);
    let overlap = defined(correlate_with_overlap(
        &a.sets,
        &a.profile,
        args.exclude_empty,
    ))?;
    let entropy = defined(correlate_with_entropy(
        &a.sets,
        &a.test.probs,
        args.exclude_empty,
    ))?;
    let caps = match &args.size_caps {
        Some(caps) => caps.clone(),
        None => default_size_caps(&a.sets),
    };
    let sweep = incremental_sweep::<f64>(&a.sets, &a.profile, &caps)?
        .into_iter()
        .map(|p| SweepEntry {
            cap: p.cap,
            n_used: p.n_used,
            r_s: p.result.map(|r| r.r_s),
            p_value: p.result.map(|r| r.p_value),
        })
        .collect();
    let caps_text: Vec<String> = caps.iter().map(usize::to_string).collect();
    let mut report = EvaluationReport::new(a.manifest.parameter("size_caps", caps_text.join(",")));
    report.correlation = Some(CorrelationSection {
        n,
        exclude_empty: args.exclude_empty,
        p_value_method: "t-approximation".to_string(),
        overlap_fraction: a.profile.overlap_fraction(),
        mean_distinct_labels: a.profile.mean_distinct_labels(),
        mean_annotations_per_instance: a.table.mean_annotations_per_instance(),
        overlap: correlation_entry(overlap, used, n),
        entropy: correlation_entry(entropy, used, n),
        sweep,
    });
    report.histograms = Some(HistogramSection {
        set_size: size_counts(&a.sets),
        distinct_labels: distinct_counts(&a.profile),
        ..HistogramSection::default()
    });
    emit_report(&args.out, &report)?;
    Ok(match overlap {
        Some(_) => Outcome::Done,
        None => Outcome::Undefined("set size vs overlap correlation is undefined".to_string()),
    })
}

pub fn similarity_cmd(args: &AnalysisArgs) -> Result<Outcome> {
    let a = prepare_analysis("similarity", args)?;
    let n = a.sets.len();
    let used = n_usable(&a.sets, args.exclude_empty);
    let result = defined(similarity::<f64>(
        &a.sets,
        &a.profile,
        a.class_names.len(),
        args.exclude_empty,
    ))?;
    let mut report = EvaluationReport::new(a.manifest);
    report.similarity = Some(SimilaritySection {
        precision: result.map(|r| r.precision),
        recall: result.map(|r| r.recall),
        subset_accuracy: result.map(|r| r.subset_accuracy),
        hamming_loss: result.map(|r| r.hamming_loss),
        n_used: used,
        n_excluded: n - used,
    });
    report.histograms = Some(HistogramSection {
        set_size: size_counts(&a.sets),
        distinct_labels: distinct_counts(&a.profile),
        ..HistogramSection::default()
    });
    emit_report(&args.out, &report)?;
    Ok(match result {
        Some(_) => Outcome::Done,
        None => Outcome::Undefined("no usable instances for the similarity analysis".to_string()),
    })
}

/// Index of the candidate with the smallest `mean_set_size / coverage`,
/// ties to the smaller alpha. Candidates with zero coverage never win.
pub fn select_alpha(candidates: &[AlphaCandidate]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        let Some(ratio) = c.ratio else { continue };
        let better = match best {
            None => true,
            Some(b) => {
                let (br, ba) = (
                    candidates[b].ratio.unwrap_or(f64::INFINITY),
                    candidates[b].alpha,
                );
                ratio < br || (ratio == br && c.alpha < ba)
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

pub fn candidate(alpha: f64, sets: &[PredictionSet], labels: &[usize]) -> Result<AlphaCandidate> {
    let batch = EvaluationBatch::<f64>::new(sets, labels)?;
    let (cov, size) = (coverage(&batch), mean_set_size(&batch));
    Ok(AlphaCandidate {
        alpha,
        coverage: cov,
        mean_set_size: size,
        ratio: (cov > 0.0).then(|| size / cov),
    })
}

pub fn sweep_alpha(args: &SweepAlphaArgs) -> Result<Outcome> {
    if args.alpha_grid.is_empty() {
        return Err(input("alpha grid is empty"));
    }
    let grid: Vec<String> = args.alpha_grid.iter().map(f64::to_string).collect();
    let mut manifest = RunManifest::new("sweep-alpha")
        .parameter("alpha_grid", grid.join(","))
        .parameter("select_on", format!("{:?}", args.select_on).to_lowercase())
        .parameter("holdout_fraction", args.holdout_fraction);
    record_method(&mut manifest, &args.method);
    let cal = load_cal(&args.data, &mut manifest)?;
    let has_test = match (&args.data.test_probs, &args.data.bundle) {
        (Some(_), _) => true,
        (None, Some(dir)) => dir.join(TEST_PROBS).exists(),
        (None, None) => false,
    };
    let test = if has_test || args.select_on == SelectOn::Test {
        Some(load_test(&args.data, &mut manifest, &cal.class_names)?)
    } else {
        None
    };
    let (fit, eval, evaluated_on) = match args.select_on {
        SelectOn::Calibration => {
            let (retained, held) =
                holdout_split(cal.split.len(), args.holdout_fraction, args.method.seed)?;
            (
                cal.split.select(&retained)?,
                cal.split.select(&held)?,
                "calibration-holdout",
            )
        }
        SelectOn::Test => (
            cal.split.clone(),
            test.clone().expect("loaded above"),
            "test",
        ),
    };
    let candidates = args
        .alpha_grid
        .iter()
        .map(|&alpha| {
            let pred = fit_predictor(&fit, &args.method, alpha)?;
            let sets = build_sets(&eval.probs, &pred)?;
            candidate(alpha, &sets, &eval.labels)
        })
        .collect::<Result<Vec<_>>>()?;
    let Some(best) = select_alpha(&candidates) else {
        let report = EvaluationReport::new(manifest);
        emit_report(&args.out, &report)?;
        return Ok(Outcome::Undefined(
            "every alpha candidate has zero coverage".to_string(),
        ));
    };
    let selected = candidates[best].alpha;
    let pred = fit_predictor(&cal.split, &args.method, selected)?;
    finish_manifest(&mut manifest, &pred);
    if let Some(path) = &args.predictor_out {
        let mut artifact = PredictorArtifact::from_predictor(&pred, &cal.class_names);
        artifact.manifest = Some(manifest.clone());
        write_predictor(&artifact, path)?;
    }
    let mut report = EvaluationReport::new(manifest);
    if let Some(test) = &test {
        let sets = build_sets(&test.probs, &pred)?;
        report.performance = Some(performance(
            &pred,
            test,
            &sets,
            cpoverlap_core::metrics::DEFAULT_ECE_BINS,
        )?);
    }
    report.alpha_sweep = Some(AlphaSweepSection {
        evaluated_on: evaluated_on.to_string(),
        candidates,
        selected_alpha: selected,
    });
    emit_report(&args.out, &report)?;
    Ok(Outcome::Done)
}
