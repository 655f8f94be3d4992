//! Tabular data: ingestion, encoding, standardization and splitting.

mod csv_io;
mod split;
mod standardize;
pub mod synthetic;

use std::path::PathBuf;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use csv_io::{load_csv, write_csv, write_features_csv};
pub use split::{split, write_split_file, SplitBundle, SplitPolicy};
pub use standardize::{fit_standardizer, standardize, ColumnStats, StandardizationStats};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed CSV in {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("target column `{0}` not found in header")]
    MissingTarget(String),
    #[error("column `{0}` named in the schema is not in the header")]
    UnknownColumn(String),
    #[error("row {row}: non-numeric token `{token}` in numeric column `{column}`")]
    NonNumeric {
        row: usize,
        column: String,
        token: String,
    },
    #[error("row {row}: empty target cell")]
    MissingTargetValue { row: usize },
    #[error("{0} contains no data rows")]
    NoRows(PathBuf),
    #[error("training index set is empty")]
    EmptyTrainSet,
    #[error("standardization stats cover {stats} columns but the dataset has {dataset}")]
    ShapeMismatch { stats: usize, dataset: usize },
    #[error("invalid split policy: {0}")]
    InvalidPolicy(String),
    #[error("split `{0}` came out empty")]
    EmptySplit(&'static str),
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

/// Prediction task of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    Binary,
    Multiclass(usize),
    Regression,
}

impl Task {
    pub fn n_classes(self) -> Option<usize> {
        match self {
            Task::Binary => Some(2),
            Task::Multiclass(k) => Some(k),
            Task::Regression => None,
        }
    }

    pub fn is_classification(self) -> bool {
        !matches!(self, Task::Regression)
    }

    /// Classification task for `k` observed classes; two or fewer is binary.
    pub fn classification(k: usize) -> Task {
        if k <= 2 {
            Task::Binary
        } else {
            Task::Multiclass(k)
        }
    }
}

/// Task family named in a schema; the class count is discovered at load time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Classification,
    Regression,
}

/// Column roles for [`load_csv`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub target: String,
    pub task: TaskKind,
    /// Columns parsed as categorical; every other non-ignored column is numeric.
    #[serde(default)]
    pub categorical: Vec<String>,
    /// Columns dropped at load time.
    #[serde(default)]
    pub ignore: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMeta {
    pub name: String,
    pub kind: FeatureKind,
    /// Category labels in code order (first-appearance order); empty for numeric columns.
    pub categories: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Classes(Vec<usize>),
    Values(Vec<f64>),
}

impl Target {
    pub fn len(&self) -> usize {
        match self {
            Target::Classes(c) => c.len(),
            Target::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, idx: &[usize]) -> Target {
        match self {
            Target::Classes(c) => Target::Classes(idx.iter().map(|&i| c[i]).collect()),
            Target::Values(v) => Target::Values(idx.iter().map(|&i| v[i]).collect()),
        }
    }
}

/// Encoded feature matrix plus target, task and per-column metadata.
///
/// Categorical cells hold dense integer codes; missing cells hold `0.0` and
/// are flagged in `missing`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub target: Target,
    pub task: Task,
    pub feature_meta: Vec<FeatureMeta>,
    pub missing: Array2<bool>,
    pub target_name: String,
    /// Class labels in index order; empty for regression.
    pub class_labels: Vec<String>,
}

impl Dataset {
    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match &self.target {
            Target::Classes(c) => Some(c),
            Target::Values(_) => None,
        }
    }

    pub fn values(&self) -> Option<&[f64]> {
        match &self.target {
            Target::Values(v) => Some(v),
            Target::Classes(_) => None,
        }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.feature_meta.iter().position(|m| m.name == name)
    }

    /// Rows `idx`, in the given order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), idx),
            target: self.target.select(idx),
            task: self.task,
            feature_meta: self.feature_meta.clone(),
            missing: self.missing.select(Axis(0), idx),
            target_name: self.target_name.clone(),
            class_labels: self.class_labels.clone(),
        }
    }

    /// Row-wise concatenation of two datasets sharing a schema.
    pub fn concat(&self, other: &Dataset) -> Dataset {
        let features = ndarray::concatenate(Axis(0), &[self.features.view(), other.features.view()])
            .expect("datasets share a column count");
        let missing = ndarray::concatenate(Axis(0), &[self.missing.view(), other.missing.view()])
            .expect("datasets share a column count");
        let target = match (&self.target, &other.target) {
            (Target::Classes(a), Target::Classes(b)) => {
                Target::Classes(a.iter().chain(b).copied().collect())
            }
            (Target::Values(a), Target::Values(b)) => {
                Target::Values(a.iter().chain(b).copied().collect())
            }
            _ => panic!("cannot concatenate classification and regression datasets"),
        };
        Dataset {
            features,
            target,
            task: self.task,
            feature_meta: self.feature_meta.clone(),
            missing,
            target_name: self.target_name.clone(),
            class_labels: self.class_labels.clone(),
        }
    }

    /// Ordinal matrix for tree learners: categorical codes kept as ordered
    /// numbers, missing cells as `NaN`.
    pub fn ordinal_matrix(&self) -> Array2<f64> {
        let mut out = self.features.clone();
        ndarray::Zip::from(&mut out)
            .and(&self.missing)
            .for_each(|x, &m| {
                if m {
                    *x = f64::NAN;
                }
            });
        out
    }

    /// Width of [`Dataset::dense_matrix`].
    pub fn dense_width(&self) -> usize {
        self.feature_meta
            .iter()
            .map(|m| match m.kind {
                FeatureKind::Numeric => 1,
                FeatureKind::Categorical => m.categories.len(),
            })
            .sum()
    }

    /// Dense matrix for the differentiable learners: categorical columns are
    /// one-hot expanded, missing cells contribute zeros.
    pub fn dense_matrix(&self) -> Array2<f64> {
        let n = self.n_samples();
        let mut out = Array2::zeros((n, self.dense_width()));
        let mut col = 0;
        for (j, meta) in self.feature_meta.iter().enumerate() {
            match meta.kind {
                FeatureKind::Numeric => {
                    for i in 0..n {
                        if !self.missing[[i, j]] {
                            out[[i, col]] = self.features[[i, j]];
                        }
                    }
                    col += 1;
                }
                FeatureKind::Categorical => {
                    let width = meta.categories.len();
                    for i in 0..n {
                        if !self.missing[[i, j]] {
                            let code = self.features[[i, j]] as usize;
                            out[[i, col + code]] = 1.0;
                        }
                    }
                    col += width;
                }
            }
        }
        out
    }

    /// Checks the structural invariants; used by tests and after ingestion.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let (n, p) = self.features.dim();
        if self.target.len() != n {
            return Err(format!("{} targets for {} rows", self.target.len(), n));
        }
        if self.missing.dim() != (n, p) || self.feature_meta.len() != p {
            return Err("metadata shape mismatch".into());
        }
        for (j, meta) in self.feature_meta.iter().enumerate() {
            if meta.kind == FeatureKind::Categorical {
                for i in 0..n {
                    let code = self.features[[i, j]];
                    if !self.missing[[i, j]] && code as usize >= meta.categories.len() {
                        return Err(format!("row {i}: code {code} out of range for `{}`", meta.name));
                    }
                }
            }
        }
        if let (Some(k), Some(labels)) = (self.task.n_classes(), self.labels()) {
            if let Some(bad) = labels.iter().find(|&&c| c >= k) {
                return Err(format!("class index {bad} outside [0, {k})"));
            }
        }
        Ok(())
    }
}
