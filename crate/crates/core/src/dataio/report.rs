//! Report document: one JSON object with the top-level keys `manifest`,
//! `performance`, `correlation`, `similarity` and `histograms` (plus
//! `alpha_sweep` for alpha-selection runs). Sections a command does not
//! produce are `null`, as are undefined statistics. Floating-point values
//! are rounded to 6 significant digits; integers are exact.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::csvio::write_text;
use super::manifest::RunManifest;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub manifest: RunManifest,
    pub performance: Option<PerformanceSection>,
    pub correlation: Option<CorrelationSection>,
    pub similarity: Option<SimilaritySection>,
    pub histograms: Option<HistogramSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_sweep: Option<AlphaSweepSection>,
}

impl EvaluationReport {
    pub fn new(manifest: RunManifest) -> Self {
        Self {
            manifest,
            performance: None,
            correlation: None,
            similarity: None,
            histograms: None,
            alpha_sweep: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceSection {
    pub n: usize,
    pub accuracy: f64,
    pub coverage: f64,
    pub ssc: f64,
    pub mean_set_size: f64,
    pub ece: f64,
    pub ece_bins: usize,
    pub empty_sets: usize,
    /// `null` when the threshold is the full-set sentinel.
    pub q_hat: Option<f64>,
    pub n_cal: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub r_s: Option<f64>,
    pub p_value: Option<f64>,
    pub n_used: usize,
    pub n_excluded: usize,
    /// Conventional band label (`very weak` .. `very strong`).
    pub strength: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub cap: usize,
    pub n_used: usize,
    pub r_s: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSection {
    pub n: usize,
    pub exclude_empty: bool,
    pub p_value_method: String,
    pub overlap_fraction: f64,
    pub mean_distinct_labels: f64,
    pub mean_annotations_per_instance: f64,
    pub overlap: CorrelationEntry,
    pub entropy: CorrelationEntry,
    pub sweep: Vec<SweepEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilaritySection {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub subset_accuracy: Option<f64>,
    pub hamming_loss: Option<f64>,
    pub n_used: usize,
    pub n_excluded: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeCount {
    pub size: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeCoverage {
    pub size: usize,
    pub count: usize,
    pub coverage: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistinctLabelCount {
    pub distinct_labels: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub bin: usize,
    pub count: usize,
    pub mean_confidence: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HistogramSection {
    pub set_size: Vec<SizeCount>,
    pub coverage_by_size: Vec<SizeCoverage>,
    pub distinct_labels: Vec<DistinctLabelCount>,
    pub reliability: Vec<ReliabilityBin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaCandidate {
    pub alpha: f64,
    pub coverage: f64,
    pub mean_set_size: f64,
    /// `mean_set_size / coverage`; `null` when coverage is zero.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSweepSection {
    /// `calibration-holdout` or `test`.
    pub evaluated_on: String,
    pub candidates: Vec<AlphaCandidate>,
    pub selected_alpha: f64,
}

/// Rounds `x` to 6 significant digits.
pub fn round_sig6(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n
                .as_f64()
                .and_then(|x| serde_json::Number::from_f64(round_sig6(x)))
            {
                *n = x;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// Serializes with rounded floats and a trailing newline.
pub fn render_report(report: &EvaluationReport) -> Result<String> {
    let mut value = serde_json::to_value(report)?;
    round_floats(&mut value);
    let mut text = serde_json::to_string_pretty(&value)?;
    text.push('\n');
    Ok(text)
}

pub fn write_report(report: &EvaluationReport, path: impl AsRef<Path>) -> Result<()> {
    write_text(path, &render_report(report)?)
}

pub fn read_report(path: impl AsRef<Path>) -> Result<EvaluationReport> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
