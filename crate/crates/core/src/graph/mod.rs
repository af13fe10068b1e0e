//! Graph data model: symmetric 0/1 adjacency, dense node features with one
//! binary sensitive column, and binarized labels.

mod io;
mod split;

pub use io::{load_dataset, load_manifest_dataset, DatasetSchema, Manifest};
pub use split::{make_split, Split, SplitSpec};

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, Matrix};

/// Immutable after construction; safe to share between workers.
#[derive(Debug, Clone)]
pub struct Graph {
    adjacency: CsrMatrix,
    features: Matrix,
    feature_names: Vec<String>,
    sensitive_index: usize,
    labels: Vec<u8>,
    label_mask: Vec<bool>,
}

impl Graph {
    /// `labels[i] == None` marks a node without ground truth.
    pub fn new(
        adjacency: CsrMatrix,
        features: Matrix,
        sensitive_index: usize,
        labels: Vec<Option<u8>>,
    ) -> Result<Self> {
        let n = features.rows();
        if adjacency.n_rows() != n || adjacency.n_cols() != n {
            return Err(Error::Shape(format!(
                "adjacency is {}x{} but there are {n} nodes",
                adjacency.n_rows(),
                adjacency.n_cols()
            )));
        }
        if labels.len() != n {
            return Err(Error::Shape(format!(
                "{} labels for {n} nodes",
                labels.len()
            )));
        }
        if !adjacency.is_symmetric() {
            return Err(Error::Schema("adjacency is not symmetric".into()));
        }
        for i in 0..n {
            if adjacency.row(i).1.iter().any(|&v| v != 1.0) {
                return Err(Error::Schema(format!(
                    "adjacency row {i} has an entry other than 1"
                )));
            }
        }
        if sensitive_index >= features.cols() {
            return Err(Error::Schema(format!(
                "sensitive index {sensitive_index} out of range for {} features",
                features.cols()
            )));
        }
        for i in 0..n {
            let s = features.get(i, sensitive_index);
            if s != 0.0 && s != 1.0 {
                return Err(Error::Schema(format!(
                    "sensitive value {s} at node {i} is not 0 or 1"
                )));
            }
        }
        if let Some((i, &l)) = labels
            .iter()
            .enumerate()
            .find_map(|(i, l)| l.as_ref().filter(|&&v| v > 1).map(|v| (i, v)))
        {
            return Err(Error::Schema(format!("label {l} at node {i} is not binary")));
        }
        if features.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::Ingestion("non-finite feature value".into()));
        }
        let label_mask = labels.iter().map(Option::is_some).collect();
        let labels = labels.into_iter().map(|l| l.unwrap_or(0)).collect();
        let feature_names = (0..features.cols()).map(|j| format!("x{j}")).collect();
        Ok(Self {
            adjacency,
            features,
            feature_names,
            sensitive_index,
            labels,
            label_mask,
        })
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.features.cols() {
            return Err(Error::Shape(format!(
                "{} names for {} feature columns",
                names.len(),
                self.features.cols()
            )));
        }
        self.feature_names = names;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.features.rows()
    }

    pub fn d(&self) -> usize {
        self.features.cols()
    }

    pub fn adjacency(&self) -> &CsrMatrix {
        &self.adjacency
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn sensitive_index(&self) -> usize {
        self.sensitive_index
    }

    /// Sensitive column as group ids.
    pub fn sensitive(&self) -> Vec<u8> {
        (0..self.n())
            .map(|i| self.features.get(i, self.sensitive_index) as u8)
            .collect()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label_mask(&self) -> &[bool] {
        &self.label_mask
    }

    pub fn labeled_nodes(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.label_mask[i]).collect()
    }

    /// Stored (i, j) entries, counting each undirected edge twice.
    pub fn directed_entries(&self) -> usize {
        self.adjacency.nnz()
    }

    /// Undirected edge count: off-diagonal pairs once, self-loops once.
    pub fn undirected_edges(&self) -> usize {
        let loops = self.adjacency.self_loops();
        (self.adjacency.nnz() - loops) / 2 + loops
    }

    pub fn connected_components(&self) -> usize {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut count = 0;
        let mut queue = VecDeque::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            queue.push_back(start);
            while let Some(u) = queue.pop_front() {
                for &v in self.adjacency.row(u).0 {
                    if !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
        }
        count
    }

    /// Z-scores every non-sensitive column; constant columns become zero.
    pub fn standardized(&self) -> Graph {
        let mut g = self.clone();
        let n = self.n() as f64;
        for j in 0..self.d() {
            if j == self.sensitive_index || self.n() == 0 {
                continue;
            }
            let col = self.features.column(j);
            let mean = col.iter().sum::<f64>() / n;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            for (i, v) in col.iter().enumerate() {
                let z = if sd > 0.0 { (v - mean) / sd } else { 0.0 };
                g.features.set(i, j, z);
            }
        }
        g
    }
}

/// 0 stays 0, anything positive becomes 1.
pub fn binarize_labels(raw: &[i64]) -> Result<Vec<u8>> {
    raw.iter()
        .enumerate()
        .map(|(i, &v)| match v {
            v if v < 0 => Err(Error::Schema(format!("negative label {v} at position {i}"))),
            0 => Ok(0),
            _ => Ok(1),
        })
        .collect()
}
