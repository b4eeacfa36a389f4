//! Dynamic KNN graph over node embeddings.

use std::cmp::Ordering;

use super::{ModelError, NodeFeatures};
use crate::linalg::Matrix;
use crate::scalar::{cosine_from_parts, dot, dot_self, Scalar};

/// Directed graph of one layer, stored as incoming-neighbor lists.
///
/// `in_neighbors[i]` lists the sources `j` of edges `j → i`, ordered by
/// decreasing similarity (ties by smaller `j`). `edge_sims[i][n]` is the
/// cosine similarity of the edge `in_neighbors[i][n] → i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGraph<T> {
    pub layer: usize,
    pub in_neighbors: Vec<Vec<usize>>,
    pub edge_sims: Vec<Vec<T>>,
}

/// One directed edge `src → dst`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge<T> {
    pub src: usize,
    pub dst: usize,
    pub sim: T,
}

impl<T: Scalar> LayerGraph<T> {
    pub fn num_nodes(&self) -> usize {
        self.in_neighbors.len()
    }

    pub fn num_edges(&self) -> usize {
        self.in_neighbors.iter().map(Vec::len).sum()
    }

    /// Edges grouped by destination, destinations ascending.
    pub fn edges(&self) -> impl Iterator<Item = Edge<T>> + '_ {
        self.in_neighbors
            .iter()
            .zip(&self.edge_sims)
            .enumerate()
            .flat_map(|(dst, (srcs, sims))| srcs.iter().zip(sims).map(move |(&src, &sim)| Edge { src, dst, sim }))
    }

    /// Builds a graph from explicit `(src, dst)` pairs over `n` nodes with
    /// zero similarities. Meant for fixtures.
    pub fn from_edges(layer: usize, n: usize, edges: &[(usize, usize)]) -> Self {
        let mut in_neighbors = vec![Vec::new(); n];
        for &(s, d) in edges {
            in_neighbors[d].push(s);
        }
        let edge_sims = in_neighbors.iter().map(|v| vec![T::zero(); v.len()]).collect();
        Self {
            layer,
            in_neighbors,
            edge_sims,
        }
    }

    /// Checks the structural invariants: list shapes agree, indices are in
    /// range, no self-loops, no duplicate sources, similarities finite and
    /// within [-1, 1], and (when given) every node has exactly `k`
    /// in-neighbors.
    pub fn validate(&self, k: Option<usize>) -> Result<(), GraphViolation> {
        let n = self.num_nodes();
        if self.edge_sims.len() != n {
            return Err(GraphViolation::new(
                self.layer,
                None,
                "similarity list count differs from node count",
            ));
        }
        for (i, (srcs, sims)) in self.in_neighbors.iter().zip(&self.edge_sims).enumerate() {
            if let Some(k) = k {
                if srcs.len() != k {
                    return Err(GraphViolation::new(
                        self.layer,
                        Some(i),
                        format!("{} in-neighbors, expected K={k}", srcs.len()),
                    ));
                }
            }
            if sims.len() != srcs.len() {
                return Err(GraphViolation::new(
                    self.layer,
                    Some(i),
                    "similarity count differs from neighbor count",
                ));
            }
            for (pos, &j) in srcs.iter().enumerate() {
                if j >= n {
                    return Err(GraphViolation::new(
                        self.layer,
                        Some(i),
                        format!("neighbor {j} out of range"),
                    ));
                }
                if j == i {
                    return Err(GraphViolation::new(self.layer, Some(i), "self-loop"));
                }
                if srcs[..pos].contains(&j) {
                    return Err(GraphViolation::new(
                        self.layer,
                        Some(i),
                        format!("duplicate neighbor {j}"),
                    ));
                }
            }
            if let Some(s) = sims.iter().find(|s| !s.is_finite() || s.abs() > T::one()) {
                return Err(GraphViolation::new(
                    self.layer,
                    Some(i),
                    format!("edge similarity {s} outside [-1, 1]"),
                ));
            }
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> LayerGraph<U> {
        LayerGraph {
            layer: self.layer,
            in_neighbors: self.in_neighbors.clone(),
            edge_sims: self
                .edge_sims
                .iter()
                .map(|v| v.iter().map(|s| U::lit(s.as_f64())).collect())
                .collect(),
        }
    }
}

/// A broken graph invariant, located by layer and (optionally) node.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("layer {layer}{}: {reason}", node.map(|n| format!(", node {n}")).unwrap_or_default())]
pub struct GraphViolation {
    pub layer: usize,
    pub node: Option<usize>,
    pub reason: String,
}

impl GraphViolation {
    fn new(layer: usize, node: Option<usize>, reason: impl Into<String>) -> Self {
        Self {
            layer,
            node,
            reason: reason.into(),
        }
    }
}

/// Connects every node `i` to the `k` nodes `j ≠ i` whose embeddings have
/// the highest cosine similarity with `x_i`, as directed edges `j → i`.
///
/// Ties go to the smaller index; a zero-norm embedding has similarity 0
/// with everything. The graph's layer is `x.layer + 1`, the layer whose
/// block consumes it.
pub fn knn_graph<T: Scalar>(x: &NodeFeatures<T>, k: usize) -> Result<LayerGraph<T>, ModelError> {
    let mut g = knn_on_matrix(&x.values, k)?;
    g.layer = x.layer + 1;
    Ok(g)
}

pub(crate) fn knn_on_matrix<T: Scalar>(x: &Matrix<T>, k: usize) -> Result<LayerGraph<T>, ModelError> {
    let n = x.rows();
    if k == 0 || k >= n {
        return Err(ModelError::NeighborCount { k, nodes: n });
    }
    if !x.is_finite() {
        return Err(ModelError::NonFinite("node features"));
    }
    let norms: Vec<T> = x.iter_rows().map(|r| dot_self(r).sqrt()).collect();
    let mut in_neighbors = Vec::with_capacity(n);
    let mut edge_sims = Vec::with_capacity(n);
    let mut cand: Vec<(T, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        let xi = x.row(i);
        cand.clear();
        cand.extend((0..n).filter(|&j| j != i).map(|j| {
            let s = cosine_from_parts(dot(x.row(j), xi), norms[j], norms[i]);
            (s, j)
        }));
        let order =
            |a: &(T, usize), b: &(T, usize)| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1));
        if k < cand.len() {
            cand.select_nth_unstable_by(k - 1, order);
            cand.truncate(k);
        }
        cand.sort_unstable_by(order);
        in_neighbors.push(cand.iter().map(|c| c.1).collect());
        edge_sims.push(cand.iter().map(|c| c.0).collect());
    }
    Ok(LayerGraph {
        layer: 0,
        in_neighbors,
        edge_sims,
    })
}
