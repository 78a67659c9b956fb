//! In-memory graph data model shared by every other module.
//!
//! Graphs are undirected: each edge is stored once as `(min, max)`, sorted
//! and deduplicated, and self-loops only ever appear at normalization time.
//! Sensitive attribute columns are physically removed from the feature
//! matrix when a graph is loaded, so downstream code starts from the
//! "features without S" baseline.

mod adjacency;
mod io;
mod split;

pub use adjacency::{
    adjacency_normalized, neighbor_mean_from_edges, neighbor_mean_matrix,
    normalized_adjacency_from_edges, NeighborMean, SparseMat,
};
pub use io::{load_graph, save_graph};
pub use split::split_stratified;

use crate::error::{Error, Result};
use ndarray::Array2;

/// Undirected attributed graph with binary sensitive attributes and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributedGraph {
    /// Node count.
    pub n: usize,
    /// Undirected edges `(i, j)` with `i < j`, sorted, deduplicated, no self-loops.
    pub edges: Vec<(u32, u32)>,
    /// `n x d` non-sensitive feature matrix.
    pub features: Array2<f64>,
    /// Names of the feature columns, length `d`.
    pub feature_names: Vec<String>,
    /// `n x k` binary sensitive matrix; column 0 is the major attribute by convention.
    pub sensitive: Array2<f64>,
    /// Names of the sensitive columns, length `k`.
    pub sensitive_names: Vec<String>,
    /// Original column index of each sensitive column in the on-disk feature
    /// matrix, so serialization can put them back where they came from.
    pub sensitive_positions: Vec<usize>,
    /// Binary node labels.
    pub labels: Vec<u8>,
    /// Original node id of each dense index (identity for generated graphs).
    pub node_ids: Vec<i64>,
}

impl AttributedGraph {
    /// Assemble a graph from parts, validating every type invariant.
    pub fn new(
        features: Array2<f64>,
        feature_names: Vec<String>,
        sensitive: Array2<f64>,
        sensitive_names: Vec<String>,
        labels: Vec<u8>,
        edges: Vec<(u32, u32)>,
    ) -> Result<Self> {
        let n = features.nrows();
        let d = features.ncols();
        if d == 0 {
            return Err(Error::Validation("feature matrix has no columns".into()));
        }
        if feature_names.len() != d {
            return Err(Error::Shape(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                d
            )));
        }
        if sensitive.nrows() != n || labels.len() != n {
            return Err(Error::Shape(format!(
                "features/sensitive/labels row counts disagree: {}/{}/{}",
                n,
                sensitive.nrows(),
                labels.len()
            )));
        }
        if sensitive.ncols() == 0 {
            return Err(Error::Validation("at least one sensitive column required".into()));
        }
        if sensitive_names.len() != sensitive.ncols() {
            return Err(Error::Shape(format!(
                "{} sensitive names for {} columns",
                sensitive_names.len(),
                sensitive.ncols()
            )));
        }
        for v in sensitive.iter() {
            if *v != 0.0 && *v != 1.0 {
                return Err(Error::Validation(format!(
                    "non-binary sensitive value {v}"
                )));
            }
        }
        for l in &labels {
            if *l > 1 {
                return Err(Error::Validation(format!("non-binary label value {l}")));
            }
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite feature value".into()));
        }
        let edges = canonicalize_edges(edges, n)?;
        let sensitive_positions = (0..sensitive.ncols()).map(|j| d + j).collect();
        Ok(Self {
            n,
            edges,
            features,
            feature_names,
            sensitive,
            sensitive_names,
            sensitive_positions,
            labels,
            node_ids: (0..n as i64).collect(),
        })
    }

    /// Feature dimension.
    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    /// Number of sensitive columns.
    pub fn k(&self) -> usize {
        self.sensitive.ncols()
    }

    /// Labels as an `n x 1` float matrix for loss computation.
    pub fn labels_f64(&self) -> Array2<f64> {
        Array2::from_shape_vec(
            (self.n, 1),
            self.labels.iter().map(|&l| f64::from(l)).collect(),
        )
        .expect("label shape")
    }
}

/// Sort, merge directed duplicates and reject invalid endpoints.
/// Self-loop rows are dropped: the stored edge set is always loop-free.
fn canonicalize_edges(edges: Vec<(u32, u32)>, n: usize) -> Result<Vec<(u32, u32)>> {
    let mut canon: Vec<(u32, u32)> = Vec::with_capacity(edges.len());
    for (a, b) in edges {
        if a as usize >= n || b as usize >= n {
            return Err(Error::Validation(format!(
                "edge ({a}, {b}) endpoint out of range for n={n}"
            )));
        }
        if a == b {
            continue;
        }
        canon.push((a.min(b), a.max(b)));
    }
    canon.sort_unstable();
    canon.dedup();
    Ok(canon)
}

/// Disjoint train/validation/test node index lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl DataSplit {
    /// Validate disjointness, range and non-emptiness against a node count.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.train.is_empty() || self.val.is_empty() || self.test.is_empty() {
            return Err(Error::Validation("every split part must be nonempty".into()));
        }
        let mut seen = vec![false; n];
        for part in [&self.train, &self.val, &self.test] {
            for &i in part {
                if i >= n {
                    return Err(Error::Validation(format!("split index {i} out of range")));
                }
                if seen[i] {
                    return Err(Error::Validation(format!("split index {i} appears twice")));
                }
                seen[i] = true;
            }
        }
        Ok(())
    }
}
