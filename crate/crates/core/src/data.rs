use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Node features for the ordinary nodes of a graph; super nodes have none.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Matrix,
}

impl FeatureMatrix {
    pub fn new(values: Matrix) -> Result<Self> {
        if let Some(pos) = values.as_slice().iter().position(|x| !x.is_finite()) {
            let cols = values.cols().max(1);
            return Err(Error::InvalidValue(format!(
                "non-finite feature at row {}, column {}",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { values })
    }

    pub fn node_count(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn row(&self, v: usize) -> &[f64] {
        self.values.row(v)
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.values
    }
}

/// Per-node class labels; `None` marks an unlabeled node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    labels: Vec<Option<usize>>,
    class_count: usize,
}

impl LabelVector {
    /// The class count is `1 + max label`.
    pub fn new(labels: Vec<Option<usize>>) -> Result<Self> {
        let class_count = labels.iter().flatten().max().map_or(0, |&c| c + 1);
        if class_count == 0 {
            return Err(Error::InvalidValue("label vector has no labeled node".into()));
        }
        Ok(Self { labels, class_count })
    }

    pub fn with_class_count(labels: Vec<Option<usize>>, class_count: usize) -> Result<Self> {
        if class_count == 0 {
            return Err(Error::InvalidParameter("class count must be at least 1".into()));
        }
        if let Some(bad) = labels.iter().flatten().find(|&&c| c >= class_count) {
            return Err(Error::InvalidValue(format!(
                "label {bad} out of range for {class_count} classes"
            )));
        }
        Ok(Self { labels, class_count })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn get(&self, v: usize) -> Option<usize> {
        self.labels[v]
    }

    pub fn as_slice(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn unlabeled_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }
}

/// Train / validation / test node ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    /// Ids must be in range and no id may appear in two splits.
    pub fn validate(&self, node_count: usize) -> Result<()> {
        let mut seen = vec![false; node_count];
        for (name, ids) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for &v in ids {
                if v >= node_count {
                    return Err(Error::InvalidValue(format!(
                        "{name} split contains node {v}, graph has {node_count}"
                    )));
                }
                if std::mem::replace(&mut seen[v], true) {
                    return Err(Error::InvalidValue(format!("node {v} appears in two splits")));
                }
            }
        }
        Ok(())
    }
}
