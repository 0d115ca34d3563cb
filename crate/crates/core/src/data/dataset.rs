use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::numeric::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Task {
    Regression,
    /// Targets are a single column of class indices `0..n_classes`.
    Classification {
        n_classes: usize,
    },
}

impl Task {
    pub fn is_classification(self) -> bool {
        matches!(self, Task::Classification { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub targets: Matrix,
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
    pub task: Task,
    /// Optional per-row labels used for stratified splitting.
    pub stratify: Option<Vec<String>>,
    /// Rows removed during ingestion because of missing or unparseable cells.
    pub dropped_rows: usize,
    /// Category lists of one-hot encoded features and label-encoded targets,
    /// keyed by source column.
    pub encodings: BTreeMap<String, Vec<String>>,
}

impl Dataset {
    pub fn new(
        features: Matrix,
        targets: Matrix,
        feature_names: Vec<String>,
        target_names: Vec<String>,
        task: Task,
    ) -> Result<Self> {
        let ds = Dataset {
            features,
            targets,
            feature_names,
            target_names,
            task,
            stratify: None,
            dropped_rows: 0,
            encodings: BTreeMap::new(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.features.rows();
        if self.targets.rows() != n {
            return Err(Error::InvalidArgument(format!(
                "{n} feature rows but {} target rows",
                self.targets.rows()
            )));
        }
        if self.feature_names.len() != self.features.cols()
            || self.target_names.len() != self.targets.cols()
        {
            return Err(Error::InvalidArgument(
                "column names do not match column counts".into(),
            ));
        }
        if let Some(s) = &self.stratify {
            if s.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "{} stratify labels for {n} rows",
                    s.len()
                )));
            }
        }
        if !self.features.is_finite() || !self.targets.is_finite() {
            return Err(Error::InvalidArgument(
                "dataset contains non-finite values".into(),
            ));
        }
        if let Task::Classification { n_classes } = self.task {
            if self.targets.cols() != 1 {
                return Err(Error::InvalidArgument(
                    "classification needs exactly one target column".into(),
                ));
            }
            if let Some(bad) = self
                .targets
                .data()
                .iter()
                .find(|&&v| v < 0.0 || v.fract() != 0.0 || v as usize >= n_classes)
            {
                return Err(Error::InvalidArgument(format!(
                    "class label {bad} outside 0..{n_classes}"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    /// Head width: number of targets, or number of classes.
    pub fn head_outputs(&self) -> usize {
        match self.task {
            Task::Regression => self.targets.cols(),
            Task::Classification { n_classes } => n_classes,
        }
    }

    /// Stratification labels: the explicit column, else class labels for
    /// classification, else none.
    pub fn strata(&self) -> Option<Vec<String>> {
        if let Some(s) = &self.stratify {
            return Some(s.clone());
        }
        match self.task {
            Task::Classification { .. } => {
                Some(self.targets.data().iter().map(|v| format!("{v}")).collect())
            }
            Task::Regression => None,
        }
    }

    pub fn class_labels(&self) -> Vec<usize> {
        self.targets.data().iter().map(|&v| v as usize).collect()
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(rows),
            targets: self.targets.select_rows(rows),
            feature_names: self.feature_names.clone(),
            target_names: self.target_names.clone(),
            task: self.task,
            stratify: self
                .stratify
                .as_ref()
                .map(|s| rows.iter().map(|&r| s[r].clone()).collect()),
            dropped_rows: self.dropped_rows,
            encodings: self.encodings.clone(),
        }
    }

    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest {
            rows: self.len(),
            feature_columns: self.n_features(),
            target_columns: self.targets.cols(),
            feature_names: self.feature_names.clone(),
            target_names: self.target_names.clone(),
            task: self.task,
            dropped_rows: self.dropped_rows,
            encodings: self.encodings.clone(),
        }
    }

    /// Writes features then targets with a header row.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.feature_names.iter().chain(&self.target_names))?;
        for r in 0..self.len() {
            let row = self
                .features
                .row(r)
                .iter()
                .chain(self.targets.row(r))
                .map(|v| v.to_string());
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// JSON summary of an ingested dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub rows: usize,
    pub feature_columns: usize,
    pub target_columns: usize,
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
    pub task: Task,
    pub dropped_rows: usize,
    pub encodings: BTreeMap<String, Vec<String>>,
}

impl DatasetManifest {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
