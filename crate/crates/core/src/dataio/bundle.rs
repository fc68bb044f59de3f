use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use super::csvio::{
    check_alignment, load_annotations, load_labels, load_probabilities, write_annotations,
    write_labels, write_probabilities,
};
use crate::ambiguity::AnnotationTable;
use crate::error::{Error, Result};
use crate::probs::ProbabilityMatrix;
use crate::scalar::Scalar;

pub const CAL_PROBS: &str = "cal_probs.csv";
pub const CAL_LABELS: &str = "cal_labels.csv";
pub const TEST_PROBS: &str = "test_probs.csv";
pub const TEST_LABELS: &str = "test_labels.csv";
pub const TEST_ANNOTATIONS: &str = "test_annotations.csv";

/// Aligned ids, softmax rows and true labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub ids: Vec<String>,
    pub probs: ProbabilityMatrix<T>,
    pub labels: Vec<usize>,
}

impl<T: Scalar> Split<T> {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.ids.is_empty() {
            return Err(Error::input("split is empty"));
        }
        if self.probs.n_rows() != self.ids.len() || self.labels.len() != self.ids.len() {
            return Err(Error::input(format!(
                "split has {} ids, {} probability rows and {} labels",
                self.ids.len(),
                self.probs.n_rows(),
                self.labels.len()
            )));
        }
        if let Some(&y) = self.labels.iter().find(|&&y| y >= self.probs.n_classes()) {
            return Err(Error::input(format!("label {y} out of range")));
        }
        let unique: BTreeSet<&str> = self.ids.iter().map(String::as_str).collect();
        if unique.len() != self.ids.len() {
            return Err(Error::input("split contains duplicate instance ids"));
        }
        Ok(())
    }

    /// Rows `idx` of this split, in the given order.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        Ok(Self {
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            probs: self.probs.select(idx)?,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        })
    }
}

/// Calibration and test data plus optional annotator labels for the test
/// instances.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle<T> {
    pub class_names: Vec<String>,
    pub cal: Split<T>,
    pub test: Split<T>,
    pub annotations: Option<AnnotationTable>,
}

impl<T: Scalar> DatasetBundle<T> {
    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.class_names.len();
        for (name, split) in [("calibration", &self.cal), ("test", &self.test)] {
            split
                .validate()
                .map_err(|e| Error::input(format!("{name} split: {e}")))?;
            if split.probs.n_classes() != k {
                return Err(Error::input(format!(
                    "{name} split has {} classes, expected {k}",
                    split.probs.n_classes()
                )));
            }
        }
        let cal_ids: BTreeSet<&str> = self.cal.ids.iter().map(String::as_str).collect();
        if let Some(id) = self
            .test
            .ids
            .iter()
            .find(|id| cal_ids.contains(id.as_str()))
        {
            return Err(Error::input(format!(
                "instance {id:?} appears in both splits"
            )));
        }
        if let Some(table) = &self.annotations {
            if table.n_classes() != k {
                return Err(Error::input("annotation table class count differs"));
            }
            table.profile_for(&self.test.ids)?;
        }
        Ok(())
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        self.validate()?;
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let names = &self.class_names;
        write_probabilities(dir.join(CAL_PROBS), &self.cal.ids, names, &self.cal.probs)?;
        write_labels(dir.join(CAL_LABELS), &self.cal.ids, &self.cal.labels, names)?;
        write_probabilities(
            dir.join(TEST_PROBS),
            &self.test.ids,
            names,
            &self.test.probs,
        )?;
        write_labels(
            dir.join(TEST_LABELS),
            &self.test.ids,
            &self.test.labels,
            names,
        )?;
        if let Some(table) = &self.annotations {
            write_annotations(dir.join(TEST_ANNOTATIONS), table, names)?;
        }
        Ok(())
    }

    /// Loads a directory written by [`DatasetBundle::write`]; the annotation
    /// file is optional.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let cal_probs = load_probabilities::<T>(dir.join(CAL_PROBS))?;
        let class_names = cal_probs.class_names.clone();
        let cal = load_split(cal_probs, &dir.join(CAL_LABELS))?;
        let test_probs = load_probabilities::<T>(dir.join(TEST_PROBS))?;
        if test_probs.class_names != class_names {
            return Err(Error::input("calibration and test class names differ"));
        }
        let test = load_split(test_probs, &dir.join(TEST_LABELS))?;
        let ann_path: PathBuf = dir.join(TEST_ANNOTATIONS);
        let annotations = if ann_path.exists() {
            Some(load_annotations(&ann_path, &class_names, Some(&test.ids))?)
        } else {
            None
        };
        let bundle = Self {
            class_names,
            cal,
            test,
            annotations,
        };
        bundle.validate()?;
        Ok(bundle)
    }
}

/// Joins a probability file with its label file, requiring identical id order.
pub fn load_split<T: Scalar>(
    probs: super::csvio::LabeledProbabilities<T>,
    labels_path: &Path,
) -> Result<Split<T>> {
    let labels = load_labels(labels_path, &probs.class_names)?;
    check_alignment(&probs.ids, &labels.ids, "probabilities vs labels")?;
    Ok(Split {
        ids: probs.ids,
        probs: probs.probs,
        labels: labels.labels,
    })
}
