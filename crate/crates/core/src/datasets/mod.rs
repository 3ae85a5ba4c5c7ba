//! Labeled/unlabeled splits with disjoint class sets.
//!
//! Unlabeled examples carry no class. Their ground truth lives in a
//! [`HiddenTruth`] registry that only evaluation code is handed, and every
//! read of it is counted so tests can audit who looked.

mod batching;
mod generate;
mod io;

use std::sync::atomic::{AtomicUsize, Ordering};

pub use batching::epoch_batches;
pub use generate::{generate_blobs, Blobs, SplitSpec};
pub use io::{load_dataset, parse_dataset, save_dataset, write_dataset};

use crate::error::{Error, Result};
use crate::numcore::Mat;

/// Examples of the old classes with their labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSet {
    classes: usize,
    x: Mat,
    y: Vec<usize>,
}

/// A borrowed labeled example.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabeledExample<'a> {
    pub x: &'a [f64],
    pub class: usize,
}

impl LabeledExample<'_> {
    pub fn one_hot(&self, classes: usize) -> Vec<f64> {
        one_hot(self.class, classes)
    }
}

pub fn one_hot(class: usize, classes: usize) -> Vec<f64> {
    let mut v = vec![0.0; classes];
    v[class] = 1.0;
    v
}

impl LabeledSet {
    pub fn new(classes: usize, x: Mat, y: Vec<usize>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::shape(format!("{} labels", x.rows()), y.len()));
        }
        if let Some(&bad) = y.iter().find(|&&c| c >= classes) {
            return Err(Error::InvalidInput(format!(
                "label {bad} out of range for {classes} old classes"
            )));
        }
        Ok(LabeledSet { classes, x, y })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.x.cols()
    }

    pub fn features(&self) -> &Mat {
        &self.x
    }

    pub fn labels(&self) -> &[usize] {
        &self.y
    }

    pub fn get(&self, i: usize) -> LabeledExample<'_> {
        LabeledExample {
            x: self.x.row(i),
            class: self.y[i],
        }
    }
}

/// Examples of the new classes. No labels by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct UnlabeledSet {
    classes: usize,
    x: Mat,
}

impl UnlabeledSet {
    pub fn new(classes: usize, x: Mat) -> Self {
        UnlabeledSet { classes, x }
    }

    /// Number of new classes, assumed known in advance.
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.x.cols()
    }

    pub fn features(&self) -> &Mat {
        &self.x
    }

    /// Features of example `id`.
    pub fn get(&self, id: usize) -> &[f64] {
        self.x.row(id)
    }
}

/// Evaluation-only ground truth of the unlabeled set, keyed by example id.
#[derive(Debug, Default)]
pub struct HiddenTruth {
    labels: Vec<usize>,
    reads: AtomicUsize,
}

impl HiddenTruth {
    pub fn new(labels: Vec<usize>) -> Self {
        HiddenTruth {
            labels,
            reads: AtomicUsize::new(0),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_of(&self, id: usize) -> usize {
        self.reads.fetch_add(1, Ordering::Relaxed);
        self.labels[id]
    }

    pub fn all(&self) -> &[usize] {
        self.reads.fetch_add(self.labels.len(), Ordering::Relaxed);
        &self.labels
    }

    /// Number of labels read so far.
    pub fn reads(&self) -> usize {
        self.reads.load(Ordering::Relaxed)
    }
}

impl Clone for HiddenTruth {
    fn clone(&self) -> Self {
        HiddenTruth::new(self.labels.clone())
    }
}

impl PartialEq for HiddenTruth {
    fn eq(&self, other: &Self) -> bool {
        self.labels == other.labels
    }
}

/// A labeled split, an unlabeled split and the unlabeled ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub labeled: LabeledSet,
    pub unlabeled: UnlabeledSet,
    pub truth: HiddenTruth,
}

impl Dataset {
    pub fn new(labeled: LabeledSet, unlabeled: UnlabeledSet, truth: HiddenTruth) -> Result<Self> {
        if labeled.input_dim() != unlabeled.input_dim() {
            return Err(Error::shape(labeled.input_dim(), unlabeled.input_dim()));
        }
        if truth.labels.len() != unlabeled.len() {
            return Err(Error::shape(format!("{} hidden labels", unlabeled.len()), truth.labels.len()));
        }
        if let Some(&bad) = truth.labels.iter().find(|&&c| c >= unlabeled.classes()) {
            return Err(Error::InvalidInput(format!(
                "hidden label {bad} out of range for {} new classes",
                unlabeled.classes()
            )));
        }
        Ok(Dataset {
            labeled,
            unlabeled,
            truth,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.labeled.input_dim()
    }

    pub fn old_classes(&self) -> usize {
        self.labeled.classes()
    }

    pub fn new_classes(&self) -> usize {
        self.unlabeled.classes()
    }
}
