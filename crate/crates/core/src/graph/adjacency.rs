//! Symmetrically normalized adjacency and neighbor-aggregation matrices.

use super::AttributedGraph;
use crate::error::{Error, Result};
use ndarray::Array2;

/// Sparse matrix stored as an undirected edge list with per-edge
/// coefficients plus an explicit diagonal. Symmetry is structural: both
/// directions of an edge share one stored value.
#[derive(Debug, Clone)]
pub struct SparseMat {
    pub n: usize,
    /// Undirected off-diagonal entries `(i, j)`, `i < j`.
    pub edges: Vec<(u32, u32)>,
    /// Coefficient applied at both `(i, j)` and `(j, i)`.
    pub coeffs: Vec<f64>,
    /// Diagonal entries, length `n`.
    pub diag: Vec<f64>,
}

impl SparseMat {
    /// `self * x` for a dense `n x d` matrix.
    pub fn matmul(&self, x: &Array2<f64>) -> Array2<f64> {
        assert_eq!(x.nrows(), self.n, "spmm row mismatch");
        let d = x.ncols();
        let mut out = Array2::zeros((self.n, d));
        for i in 0..self.n {
            let w = self.diag[i];
            if w != 0.0 {
                for c in 0..d {
                    out[[i, c]] = w * x[[i, c]];
                }
            }
        }
        for (e, &(a, b)) in self.edges.iter().enumerate() {
            let w = self.coeffs[e];
            if w == 0.0 {
                continue;
            }
            let (a, b) = (a as usize, b as usize);
            for c in 0..d {
                out[[a, c]] += w * x[[b, c]];
                out[[b, c]] += w * x[[a, c]];
            }
        }
        out
    }

    /// Dense copy, for tests and tiny graphs.
    pub fn to_dense(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            m[[i, i]] = self.diag[i];
        }
        for (e, &(a, b)) in self.edges.iter().enumerate() {
            m[[a as usize, b as usize]] = self.coeffs[e];
            m[[b as usize, a as usize]] = self.coeffs[e];
        }
        m
    }
}

/// Build `D^{-1/2} (A_w + I) D^{-1/2}` (self-loop weight 1) or, without
/// self-loops, `D^{-1/2} A_w D^{-1/2}` with zero rows for isolated nodes.
///
/// `edge_weights`, when given, must cover every edge in `g.edges` order and
/// lie in `(0, 1]`; omitted weights default to 1, which yields the standard
/// GCN normalization.
pub fn adjacency_normalized(
    g: &AttributedGraph,
    edge_weights: Option<&[f64]>,
    add_self_loops: bool,
) -> Result<SparseMat> {
    normalized_adjacency_from_edges(g.n, &g.edges, edge_weights, add_self_loops)
}

/// [`adjacency_normalized`] over a bare edge list.
pub fn normalized_adjacency_from_edges(
    n: usize,
    edges: &[(u32, u32)],
    edge_weights: Option<&[f64]>,
    add_self_loops: bool,
) -> Result<SparseMat> {
    let weights: Vec<f64> = match edge_weights {
        Some(w) => {
            if w.len() != edges.len() {
                return Err(Error::Shape(format!(
                    "{} weights for {} edges",
                    w.len(),
                    edges.len()
                )));
            }
            for (&wv, &(a, b)) in w.iter().zip(edges) {
                if !(wv > 0.0 && wv <= 1.0) {
                    return Err(Error::Validation(format!(
                        "edge ({a}, {b}) weight {wv} outside (0, 1]"
                    )));
                }
            }
            w.to_vec()
        }
        None => vec![1.0; edges.len()],
    };

    let mut deg = vec![if add_self_loops { 1.0 } else { 0.0 }; n];
    for (e, &(a, b)) in edges.iter().enumerate() {
        deg[a as usize] += weights[e];
        deg[b as usize] += weights[e];
    }
    let inv_sqrt: Vec<f64> = deg
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();

    let coeffs: Vec<f64> = edges
        .iter()
        .zip(&weights)
        .map(|(&(a, b), &w)| w * inv_sqrt[a as usize] * inv_sqrt[b as usize])
        .collect();
    let diag: Vec<f64> = if add_self_loops {
        inv_sqrt.iter().map(|&s| s * s).collect()
    } else {
        vec![0.0; n]
    };

    Ok(SparseMat {
        n,
        edges: edges.to_vec(),
        coeffs,
        diag,
    })
}

/// Build the neighbor-mean operator for a graph: row i averages the
/// features of i's neighbors, and isolated nodes get an all-zero row.
pub fn neighbor_mean_matrix(g: &AttributedGraph) -> NeighborMean {
    neighbor_mean_from_edges(g.n, &g.edges)
}

/// [`neighbor_mean_matrix`] over a bare edge list.
pub fn neighbor_mean_from_edges(n: usize, edges: &[(u32, u32)]) -> NeighborMean {
    let mut neighbors: Vec<Vec<u32>> = vec![Vec::new(); n];
    for &(a, b) in edges {
        neighbors[a as usize].push(b);
        neighbors[b as usize].push(a);
    }
    NeighborMean { neighbors }
}

/// Neighbor-mean aggregation `(D^{-1} A) x` with zero rows for isolated nodes.
#[derive(Debug, Clone)]
pub struct NeighborMean {
    pub neighbors: Vec<Vec<u32>>,
}

impl NeighborMean {
    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    pub fn matmul(&self, x: &Array2<f64>) -> Array2<f64> {
        let d = x.ncols();
        let mut out = Array2::zeros((self.n(), d));
        for (i, nb) in self.neighbors.iter().enumerate() {
            if nb.is_empty() {
                continue;
            }
            let inv = 1.0 / nb.len() as f64;
            for &j in nb {
                for c in 0..d {
                    out[[i, c]] += inv * x[[j as usize, c]];
                }
            }
        }
        out
    }

    /// Transposed product, needed by reverse-mode differentiation.
    pub fn matmul_t(&self, g: &Array2<f64>) -> Array2<f64> {
        let d = g.ncols();
        let mut out = Array2::zeros((self.n(), d));
        for (i, nb) in self.neighbors.iter().enumerate() {
            if nb.is_empty() {
                continue;
            }
            let inv = 1.0 / nb.len() as f64;
            for &j in nb {
                for c in 0..d {
                    out[[j as usize, c]] += inv * g[[i, c]];
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};

    fn graph(n: usize, edges: Vec<(u32, u32)>) -> AttributedGraph {
        AttributedGraph::new(
            Array2::zeros((n, 1)) + 1.0,
            vec!["x".into()],
            Array2::zeros((n, 1)),
            vec!["s".into()],
            vec![0; n],
            edges,
        )
        .unwrap()
    }

    #[test]
    fn two_node_clique_with_self_loops_is_all_half() {
        let g = graph(2, vec![(0, 1)]);
        let m = adjacency_normalized(&g, None, true).unwrap().to_dense();
        assert_abs_diff_eq!(m, array![[0.5, 0.5], [0.5, 0.5]], epsilon = 1e-15);
    }

    #[test]
    fn isolated_node_with_self_loops_gets_identity_row() {
        let g = graph(3, vec![(0, 1)]);
        let m = adjacency_normalized(&g, None, true).unwrap().to_dense();
        assert_abs_diff_eq!(m[[2, 2]], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m[[2, 0]], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn explicit_unit_weights_match_default() {
        let g = graph(4, vec![(0, 1), (1, 2), (2, 3), (0, 3)]);
        let a = adjacency_normalized(&g, None, true).unwrap().to_dense();
        let b = adjacency_normalized(&g, Some(&[1.0; 4]), true)
            .unwrap()
            .to_dense();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_weight_is_error() {
        let g = graph(3, vec![(0, 1), (1, 2)]);
        assert!(adjacency_normalized(&g, Some(&[0.5]), true).is_err());
    }

    #[test]
    fn output_is_exactly_symmetric() {
        let g = graph(5, vec![(0, 1), (0, 2), (1, 3), (2, 4), (3, 4)]);
        let m = adjacency_normalized(&g, Some(&[0.9, 0.3, 0.5, 0.7, 1.0]), true)
            .unwrap()
            .to_dense();
        let mt = m.t().to_owned();
        assert_eq!(m, mt);
    }

    #[test]
    fn neighbor_mean_handles_isolated_nodes() {
        let g = graph(3, vec![(0, 1)]);
        let m = neighbor_mean_matrix(&g);
        let x = array![[1.0], [3.0], [5.0]];
        let y = m.matmul(&x);
        assert_abs_diff_eq!(y, array![[3.0], [1.0], [0.0]], epsilon = 1e-15);
    }
}
