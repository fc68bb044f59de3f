use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

/// One human label for one instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationRecord {
    pub instance: String,
    pub annotator: String,
    pub label: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct InstanceLabels {
    labels: BTreeSet<usize>,
    records: usize,
}

/// Long-format annotation records grouped per instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationTable {
    records: Vec<AnnotationRecord>,
    by_instance: BTreeMap<String, InstanceLabels>,
    n_classes: usize,
}

impl AnnotationTable {
    pub fn new(records: Vec<AnnotationRecord>, n_classes: usize) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::input("annotation table is empty"));
        }
        let mut by_instance: BTreeMap<String, InstanceLabels> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            if r.label >= n_classes {
                return Err(Error::input(format!(
                    "record {i} ({}): label {} out of range for {n_classes} classes",
                    r.instance, r.label
                )));
            }
            let entry = by_instance.entry(r.instance.clone()).or_default();
            entry.labels.insert(r.label);
            entry.records += 1;
        }
        Ok(Self {
            records,
            by_instance,
            n_classes,
        })
    }

    pub fn records(&self) -> &[AnnotationRecord] {
        &self.records
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_instances(&self) -> usize {
        self.by_instance.len()
    }

    pub fn instance_ids(&self) -> impl Iterator<Item = &str> {
        self.by_instance.keys().map(String::as_str)
    }

    /// Distinct labels given to `instance`, ascending.
    pub fn label_set(&self, instance: &str) -> Option<Vec<usize>> {
        self.by_instance
            .get(instance)
            .map(|e| e.labels.iter().copied().collect())
    }

    /// Mean number of annotation records per instance.
    pub fn mean_annotations_per_instance(&self) -> f64 {
        self.records.len() as f64 / self.by_instance.len() as f64
    }

    /// Overlap profile in ascending instance-id order.
    pub fn overlap_profile(&self) -> OverlapProfile {
        OverlapProfile {
            instances: self
                .by_instance
                .values()
                .map(|e| InstanceOverlap::from_labels(&e.labels))
                .collect(),
        }
    }

    /// Overlap profile aligned with `ids`. Every id must have at least one
    /// record and every annotated instance must appear in `ids`.
    pub fn profile_for(&self, ids: &[String]) -> Result<OverlapProfile> {
        let mut instances = Vec::with_capacity(ids.len());
        for id in ids {
            let entry = self
                .by_instance
                .get(id)
                .ok_or_else(|| Error::input(format!("instance {id:?} has no annotations")))?;
            instances.push(InstanceOverlap::from_labels(&entry.labels));
        }
        let known: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
        if let Some(stray) = self.instance_ids().find(|id| !known.contains(id)) {
            return Err(Error::input(format!(
                "annotations reference instance {stray:?} absent from the evaluation data"
            )));
        }
        Ok(OverlapProfile { instances })
    }
}

/// Class-overlap summary for one instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceOverlap {
    pub distinct_label_count: usize,
    pub has_overlap: bool,
    pub label_set: Vec<usize>,
}

impl InstanceOverlap {
    pub fn from_labels(labels: &BTreeSet<usize>) -> Self {
        Self {
            distinct_label_count: labels.len(),
            has_overlap: labels.len() >= 2,
            label_set: labels.iter().copied().collect(),
        }
    }
}

/// Per-instance overlap, aligned with some instance ordering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverlapProfile {
    pub instances: Vec<InstanceOverlap>,
}

impl OverlapProfile {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Fraction of instances with two or more distinct labels.
    pub fn overlap_fraction(&self) -> f64 {
        if self.instances.is_empty() {
            return 0.0;
        }
        let n = self.instances.iter().filter(|i| i.has_overlap).count();
        n as f64 / self.instances.len() as f64
    }

    pub fn mean_distinct_labels(&self) -> f64 {
        if self.instances.is_empty() {
            return 0.0;
        }
        let total: usize = self.instances.iter().map(|i| i.distinct_label_count).sum();
        total as f64 / self.instances.len() as f64
    }

    /// Number of instances per distinct-label count.
    pub fn distinct_label_histogram(&self) -> BTreeMap<usize, usize> {
        let mut hist = BTreeMap::new();
        for i in &self.instances {
            *hist.entry(i.distinct_label_count).or_insert(0) += 1;
        }
        hist
    }
}
