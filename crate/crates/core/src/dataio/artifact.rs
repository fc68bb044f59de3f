use std::path::Path;

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use super::csvio::write_text;
use super::manifest::RunManifest;
use crate::conformal::{CalibratedPredictor, Method, MethodConfig, SetRule, Threshold};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// JSON spelling of the full-set threshold.
pub const FULL_SET_SENTINEL: &str = "FULL-SET";

/// Threshold as stored on disk: a number, or the full-set sentinel string.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoredThreshold(pub Option<f64>);

impl Serialize for StoredThreshold {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            Some(q) => s.serialize_f64(q),
            None => s.serialize_str(FULL_SET_SENTINEL),
        }
    }
}

impl<'de> Deserialize<'de> for StoredThreshold {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(q) => Ok(Self(Some(q))),
            Raw::Text(t) if t == FULL_SET_SENTINEL => Ok(Self(None)),
            Raw::Text(t) => Err(de::Error::custom(format!(
                "q_hat must be a number or {FULL_SET_SENTINEL:?}, got {t:?}"
            ))),
        }
    }
}

/// Serialized calibration result. Floats are written at full precision so
/// a reloaded predictor reproduces the original sets exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorArtifact {
    pub method: String,
    pub set_rule: String,
    pub alpha: f64,
    pub lambda: f64,
    pub k_reg: usize,
    pub q_hat: StoredThreshold,
    pub n_cal: usize,
    pub n_classes: usize,
    pub class_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<RunManifest>,
}

impl PredictorArtifact {
    pub fn from_predictor<T: Scalar>(
        pred: &CalibratedPredictor<T>,
        class_names: &[String],
    ) -> Self {
        Self {
            method: pred.config.method.as_str().to_string(),
            set_rule: pred.config.rule.as_str().to_string(),
            alpha: pred.alpha.as_f64(),
            lambda: pred.config.lambda.as_f64(),
            k_reg: pred.config.k_reg,
            q_hat: StoredThreshold(pred.q_hat.finite().map(Scalar::as_f64)),
            n_cal: pred.n_cal,
            n_classes: pred.n_classes,
            class_names: class_names.to_vec(),
            manifest: None,
        }
    }

    pub fn to_predictor<T: Scalar>(&self) -> Result<CalibratedPredictor<T>> {
        let method: Method = self.method.parse()?;
        let rule: SetRule = self.set_rule.parse()?;
        let config = MethodConfig {
            method,
            lambda: T::of(self.lambda),
            k_reg: self.k_reg,
            rule,
        };
        config.validate()?;
        if self.class_names.len() != self.n_classes {
            return Err(Error::input(format!(
                "predictor lists {} class names for {} classes",
                self.class_names.len(),
                self.n_classes
            )));
        }
        Ok(CalibratedPredictor {
            config,
            alpha: T::of(self.alpha),
            q_hat: match self.q_hat.0 {
                Some(q) => Threshold::Finite(T::of(q)),
                None => Threshold::FullSet,
            },
            n_cal: self.n_cal,
            n_classes: self.n_classes,
        })
    }
}

pub fn write_predictor(artifact: &PredictorArtifact, path: impl AsRef<Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(artifact)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_predictor(path: impl AsRef<Path>) -> Result<PredictorArtifact> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
