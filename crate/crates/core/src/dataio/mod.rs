//! File formats: CSV inputs, predictor artifacts, bundle directories and the
//! JSON report.

mod artifact;
mod bundle;
mod csvio;
mod manifest;
mod report;

pub use artifact::{
    read_predictor, write_predictor, PredictorArtifact, StoredThreshold, FULL_SET_SENTINEL,
};
pub use bundle::{
    load_split, DatasetBundle, Split, CAL_LABELS, CAL_PROBS, TEST_ANNOTATIONS, TEST_LABELS,
    TEST_PROBS,
};
pub use csvio::{
    check_alignment, load_annotations, load_labels, load_probabilities, resolve_label,
    write_annotations, write_labels, write_probabilities, write_text, LabelFile,
    LabeledProbabilities,
};
pub use manifest::{InputDigest, RunManifest, TOOL_NAME};
pub use report::{
    read_report, render_report, round_sig6, write_report, AlphaCandidate, AlphaSweepSection,
    CorrelationEntry, CorrelationSection, DistinctLabelCount, EvaluationReport, HistogramSection,
    PerformanceSection, ReliabilityBin, SimilaritySection, SizeCount, SizeCoverage, SweepEntry,
};
