//! Dataset ingestion and preparation.
//!
//! The pipeline is `load_csv -> stratified split -> fit preprocessing on the
//! training rows -> transform both sides -> partition the training rows
//! across clients`. Synthetic data skips the CSV stage and enters at the
//! split.

pub mod ingest;
pub mod partition;
pub mod preprocess;
pub mod split;
pub mod synthetic;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;

pub use ingest::{load_csv, read_csv, Cell, RawTable};
pub use partition::{partition_non_iid, PartitionPlan};
pub use preprocess::{preprocess, Preprocessor, Scaler, ScalerColumn, Scaling};
pub use split::{split_train_test, stratified_split};
pub use synthetic::{generate_synthetic, SyntheticSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureColumn {
    pub name: String,
    pub kind: ColumnKind,
}

/// User-declared layout of a flow-record CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSchema {
    pub features: Vec<FeatureColumn>,
    pub label: String,
    /// Class names in index order; label cells must match one of them.
    pub classes: Vec<String>,
}

impl DatasetSchema {
    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::validation("schema declares no feature columns"));
        }
        if self.classes.len() < 2 {
            return Err(Error::validation("schema needs at least 2 classes"));
        }
        let mut names: Vec<&str> = self.features.iter().map(|f| f.name.as_str()).collect();
        names.push(&self.label);
        let mut sorted = names.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::validation(format!("duplicate column name '{}'", w[0])));
        }
        let mut classes = self.classes.clone();
        classes.sort_unstable();
        if classes.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::validation("duplicate class name"));
        }
        Ok(())
    }
}

/// Numeric design matrix plus labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    /// `[rows, features]`.
    pub x: Tensor,
    pub y: Vec<usize>,
    pub num_classes: usize,
    /// Present iff a scaling step produced `x`.
    pub scaler: Option<Scaler>,
}

impl FeatureMatrix {
    pub fn new(x: Tensor, y: Vec<usize>, num_classes: usize) -> Result<Self> {
        if x.shape().len() != 2 || x.rows() != y.len() {
            return Err(Error::structural(format!(
                "feature matrix {:?} does not match {} labels",
                x.shape(),
                y.len()
            )));
        }
        if let Some(&bad) = y.iter().find(|&&c| c >= num_classes) {
            return Err(Error::validation(format!("label {bad} out of range for {num_classes} classes")));
        }
        if !x.all_finite() {
            return Err(Error::validation("feature matrix contains non-finite values"));
        }
        Ok(Self {
            x,
            y,
            num_classes,
            scaler: None,
        })
    }

    pub fn rows(&self) -> usize {
        self.y.len()
    }

    pub fn features(&self) -> usize {
        self.x.row_width()
    }

    pub fn select(&self, indices: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            x: self.x.select_rows(indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            num_classes: self.num_classes,
            scaler: self.scaler.clone(),
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        class_counts(&self.y, self.num_classes)
    }
}

pub(crate) fn class_counts(labels: &[usize], num_classes: usize) -> Vec<usize> {
    let mut counts = vec![0; num_classes];
    for &y in labels {
        counts[y] += 1;
    }
    counts
}
