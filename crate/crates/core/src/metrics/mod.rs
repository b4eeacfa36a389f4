//! Layer-wise graph metrics.
//!
//! For a layer graph `E^l` (edges `j → i`):
//!
//! * `S_emb`: mean cosine similarity of the endpoint embeddings,
//! * `D`: mean Manhattan distance of the endpoint patches on the grid,
//! * `S_vis`: mean cosine similarity of the endpoint patches' raw pixels,
//! * `p`: head probability of the ground-truth class, plus a top-1 flag,
//! * `Q`: object/background modularity (see [`modularity`]).
//!
//! All means accumulate in `f64`.

mod aggregate;
mod modularity;
mod report;

pub use aggregate::{aggregate, AggregateRow};
pub use modularity::{modularity, modularity_with, CommunityStats, ModularityBreakdown, ModularityVariant};
pub use report::{
    format_table, read_metrics_csv, write_aggregate_csv, write_metrics_csv, write_metrics_json, MetricsRow, ReportError,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{flatten, GridCoord, PatchGrid, PatchMask};
use crate::model::{argmax, head_output, LayerGraph, ModelError, ModelWeights, NodeFeatures};
use crate::scalar::{cosine, Scalar};
use crate::trace::Trace;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("layer {layer} has no edges to average over")]
    EmptyGraph { layer: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("label {label} outside 0..{classes}")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("no reports to aggregate")]
    NoReports,
    #[error("reports disagree on layer count ({0} vs {1})")]
    LayerCountMismatch(usize, usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Metric values of one layer; optional fields are absent when the input
/// they need (label, mask) was not supplied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerMetrics {
    pub layer: usize,
    #[serde(rename = "S_emb")]
    pub s_emb: f64,
    #[serde(rename = "D")]
    pub distance: f64,
    #[serde(rename = "S_vis")]
    pub s_vis: f64,
    pub p: Option<f64>,
    pub top1_hit: Option<bool>,
    #[serde(rename = "Q")]
    pub q: Option<f64>,
}

fn check_nonempty<T: Scalar>(g: &LayerGraph<T>) -> Result<usize, MetricsError> {
    match g.num_edges() {
        0 => Err(MetricsError::EmptyGraph { layer: g.layer }),
        n => Ok(n),
    }
}

fn check_index_range<T: Scalar>(g: &LayerGraph<T>, n: usize) -> Result<(), MetricsError> {
    if g.num_nodes() > n || g.in_neighbors.iter().flatten().any(|&j| j >= n) {
        return Err(MetricsError::Shape(format!(
            "graph references nodes beyond the {n} available"
        )));
    }
    Ok(())
}

/// Mean cosine similarity between the embeddings of connected nodes.
///
/// `x` should be the features the graph was built from.
pub fn embedding_similarity<T: Scalar>(g: &LayerGraph<T>, x: &NodeFeatures<T>) -> Result<f64, MetricsError> {
    let n_edges = check_nonempty(g)?;
    check_index_range(g, x.num_nodes())?;
    let rows: Vec<Vec<f64>> = x
        .values
        .iter_rows()
        .map(|r| r.iter().map(|v| v.as_f64()).collect())
        .collect();
    let total: f64 = g.edges().map(|e| cosine(&rows[e.src], &rows[e.dst])).sum();
    Ok(total / n_edges as f64)
}

/// Mean of the similarities stored on the edges.
pub fn embedding_similarity_from_edges<T: Scalar>(g: &LayerGraph<T>) -> Result<f64, MetricsError> {
    let n_edges = check_nonempty(g)?;
    let total: f64 = g.edges().map(|e| e.sim.as_f64()).sum();
    Ok(total / n_edges as f64)
}

/// Mean Manhattan distance between connected patches.
pub fn spatial_distance<T: Scalar>(g: &LayerGraph<T>, coords: &[GridCoord]) -> Result<f64, MetricsError> {
    let n_edges = check_nonempty(g)?;
    check_index_range(g, coords.len())?;
    let total: usize = g.edges().map(|e| coords[e.src].manhattan(coords[e.dst])).sum();
    Ok(total as f64 / n_edges as f64)
}

/// Mean cosine similarity between the flattened RGB values of connected
/// patches. An all-black patch has similarity 0 with everything.
pub fn visual_similarity<T: Scalar>(g: &LayerGraph<T>, grid: &PatchGrid) -> Result<f64, MetricsError> {
    let n_edges = check_nonempty(g)?;
    check_index_range(g, grid.len())?;
    let flat: Vec<Vec<f64>> = grid.patches().iter().map(flatten).collect();
    let total: f64 = g.edges().map(|e| cosine(&flat[e.src], &flat[e.dst])).sum();
    Ok(total / n_edges as f64)
}

/// Ground-truth probability and top-1 hit of the head applied to `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerPrediction {
    pub p: f64,
    pub top1_hit: bool,
}

pub fn layer_prediction<T: Scalar>(
    x: &NodeFeatures<T>,
    w: &ModelWeights<T>,
    label: usize,
) -> Result<LayerPrediction, MetricsError> {
    let classes = w.config.num_classes;
    if label >= classes {
        return Err(MetricsError::LabelOutOfRange { label, classes });
    }
    let out = head_output(x, w)?;
    Ok(prediction_from_probs(&out.probs, label))
}

fn prediction_from_probs<T: Scalar>(probs: &[T], label: usize) -> LayerPrediction {
    LayerPrediction {
        p: probs[label].as_f64(),
        top1_hit: argmax(probs) == label,
    }
}

/// Inputs for [`analyze_trace`] beyond the trace itself.
#[derive(Debug, Clone, Copy)]
pub struct AnalysisInputs<'a, T> {
    pub grid: &'a PatchGrid,
    pub mask: Option<&'a PatchMask>,
    pub label: Option<usize>,
    /// When given and the trace carries features, `p` is recomputed from
    /// `X^l`; otherwise the stored head outputs are used.
    pub weights: Option<&'a ModelWeights<T>>,
    pub variant: ModularityVariant,
}

/// All applicable metrics for every layer of a trace.
///
/// `S_emb` of layer `l` is measured on `X^{l-1}`, the features the layer's
/// graph was built from (falling back to stored edge similarities when
/// features were elided); `p` is read from the head at `X^l`.
pub fn analyze_trace<T: Scalar>(
    t: &Trace<T>,
    inputs: AnalysisInputs<'_, T>,
) -> Result<Vec<LayerMetrics>, MetricsError> {
    let coords = inputs.grid.coords();
    if let Some(y) = inputs.label {
        if y >= t.config.num_classes {
            return Err(MetricsError::LabelOutOfRange {
                label: y,
                classes: t.config.num_classes,
            });
        }
    }
    let mut out = Vec::with_capacity(t.num_layers());
    for (idx, g) in t.graphs.iter().enumerate() {
        let layer = idx + 1;
        let s_emb = match t.features_at(layer - 1) {
            Some(x) => embedding_similarity(g, x)?,
            None => embedding_similarity_from_edges(g)?,
        };
        let pred = match inputs.label {
            None => None,
            Some(y) => Some(match (inputs.weights, t.features_at(layer)) {
                (Some(w), Some(x)) => layer_prediction(x, w, y)?,
                _ => prediction_from_probs(&t.heads[idx].probs, y),
            }),
        };
        let q = inputs
            .mask
            .map(|m| modularity_with(g, m, inputs.variant).map(|r| r.0))
            .transpose()?;
        out.push(LayerMetrics {
            layer,
            s_emb,
            distance: spatial_distance(g, &coords)?,
            s_vis: visual_similarity(g, inputs.grid)?,
            p: pred.map(|p| p.p),
            top1_hit: pred.map(|p| p.top1_hit),
            q,
        });
    }
    Ok(out)
}
