//! Human-annotation analyses: class overlap, rank correlation of set size
//! against overlap and entropy, and set-versus-annotation similarity.
//!
//! These analyses drop instances whose prediction set is empty unless the
//! caller opts out; `n_used` always reports how many instances remained.

mod annotations;
mod correlate;
mod similarity;
mod spearman;

pub use annotations::{AnnotationRecord, AnnotationTable, InstanceOverlap, OverlapProfile};
pub use correlate::{
    correlate_with_entropy, correlate_with_overlap, default_size_caps, incremental_sweep,
    SweepPoint,
};
pub use similarity::{similarity, SimilarityReport};
pub use spearman::{
    average_ranks, spearman_rs, spearman_with, CorrelationResult, PValueMethod, Strength,
    EXACT_PERMUTATION_MAX_N,
};
