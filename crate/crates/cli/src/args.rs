use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cpoverlap_core::{Method, SetRule};

#[derive(Debug, Parser)]
#[command(
    name = "cpoverlap",
    version,
    about = "Conformal prediction sets and their agreement with annotator class overlap"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic bundle directory
    Synth(SynthArgs),
    /// Calibrate a predictor on the calibration split
    Calibrate(CalibrateArgs),
    /// Emit one prediction set per instance
    Predict(PredictArgs),
    /// Coverage, SSC, mean set size and ECE on the test split
    Evaluate(EvaluateArgs),
    /// Set size against annotator overlap and softmax entropy
    Correlate(AnalysisArgs),
    /// Agreement between prediction sets and annotator label sets
    Similarity(AnalysisArgs),
    /// Choose alpha by minimum mean set size over coverage
    SweepAlpha(SweepAlphaArgs),
}

/// Input files. `--bundle` supplies the standard file names inside a
/// directory; explicit paths override individual files.
#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    #[arg(long, value_name = "DIR")]
    pub bundle: Option<PathBuf>,
    #[arg(long, value_name = "CSV")]
    pub cal_probs: Option<PathBuf>,
    #[arg(long, value_name = "CSV")]
    pub cal_labels: Option<PathBuf>,
    #[arg(long, value_name = "CSV")]
    pub test_probs: Option<PathBuf>,
    #[arg(long, value_name = "CSV")]
    pub test_labels: Option<PathBuf>,
    #[arg(long, value_name = "CSV")]
    pub annotations: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Lac,
    Aps,
    Raps,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Lac => Method::Lac,
            MethodArg::Aps => Method::Aps,
            MethodArg::Raps => Method::Raps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    /// Stop at the first class whose running score reaches the threshold
    Inclusive,
    /// Keep only classes whose running score stays at or below the threshold
    Threshold,
}

impl From<RuleArg> for SetRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Inclusive => SetRule::Inclusive,
            RuleArg::Threshold => SetRule::Threshold,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct MethodArgs {
    #[arg(long, value_enum, default_value_t = MethodArg::Aps)]
    pub method: MethodArg,
    /// RAPS penalty weight; tuned on a calibration holdout when omitted
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Candidate penalty weights for RAPS tuning
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub lambda_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1)]
    pub k_reg: usize,
    #[arg(long, value_enum, default_value_t = RuleArg::Inclusive)]
    pub set_rule: RuleArg,
    /// Seed for every holdout split
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Either a stored predictor or the settings to calibrate one.
#[derive(Debug, Clone, Args)]
pub struct PredictorSource {
    /// Calibrated predictor JSON; skips calibration
    #[arg(long, value_name = "JSON")]
    pub predictor: Option<PathBuf>,
    #[command(flatten)]
    pub method: MethodArgs,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 1000)]
    pub n_cal: usize,
    #[arg(long, default_value_t = 1000)]
    pub n_test: usize,
    #[arg(long, default_value_t = 0.5)]
    pub concentration: f64,
    #[arg(long, default_value_t = 50)]
    pub annotators: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pub miscalibration: f64,
    /// One-hot posteriors: every annotator agrees with the true label
    #[arg(long)]
    pub deterministic: bool,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub method: MethodArgs,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[arg(long, value_name = "JSON")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_name = "JSON")]
    pub predictor: PathBuf,
    /// Output CSV `id,size,set`; a manifest is written next to it
    #[arg(long, value_name = "CSV")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub source: PredictorSource,
    #[arg(long, default_value_t = 15)]
    pub bins: usize,
    #[arg(long, value_name = "JSON")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalysisArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub source: PredictorSource,
    /// Drop instances whose prediction set is empty
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set, num_args = 0..=1, default_missing_value = "true")]
    pub exclude_empty: bool,
    /// Size caps for the incremental correlation sweep
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub size_caps: Option<Vec<usize>>,
    #[arg(long, value_name = "JSON")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SelectOn {
    /// Seeded holdout carved from the calibration split
    Calibration,
    /// The labelled test split
    Test,
}

#[derive(Debug, Args)]
pub struct SweepAlphaArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub method: MethodArgs,
    #[arg(
        long,
        value_delimiter = ',',
        value_name = "LIST",
        default_value = "0.05,0.1,0.15,0.2"
    )]
    pub alpha_grid: Vec<f64>,
    /// Data the candidate ratios are computed on
    #[arg(long, value_enum, default_value_t = SelectOn::Calibration)]
    pub select_on: SelectOn,
    /// Fraction of the calibration split held out for selection
    #[arg(long, default_value_t = cpoverlap_core::conformal::DEFAULT_SPLIT_FRACTION)]
    pub holdout_fraction: f64,
    /// Also write the predictor calibrated at the selected alpha
    #[arg(long, value_name = "JSON")]
    pub predictor_out: Option<PathBuf>,
    #[arg(long, value_name = "JSON")]
    pub out: Option<PathBuf>,
}
