//! Split-conformal prediction sets (LAC, APS, RAPS) and the metrics used to
//! judge whether their size tracks aleatoric uncertainty measured by
//! multi-annotator class overlap.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, which is what the file formats and the CLI
//! use.

pub mod ambiguity;
pub mod conformal;
pub mod dataio;
pub mod error;
pub mod metrics;
pub mod probs;
pub mod scalar;
pub mod synth;

pub use conformal::{CalibratedPredictor, Method, MethodConfig, PredictionSet, SetRule, Threshold};
pub use error::{Error, Result};
pub use probs::{ProbabilityMatrix, ProbabilityVector};
pub use scalar::Scalar;

pub type Predictor = CalibratedPredictor<f64>;
pub type Config = MethodConfig<f64>;
pub type Probabilities = ProbabilityMatrix<f64>;
