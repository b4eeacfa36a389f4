use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::imaging::PatchMask;
use crate::model::LayerGraph;
use crate::scalar::Scalar;

/// Which modularity formula to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ModularityVariant {
    /// `Σ_c [ L_c/|E| − (k_in_c · k_out_c / (2|E|))² ]`.
    #[default]
    Printed,
    /// Directed Leicht–Newman: `Σ_c [ L_c/|E| − k_in_c · k_out_c / |E|² ]`.
    LeichtNewman,
}

/// Edge and degree totals of one community.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CommunityStats {
    /// Edges with both endpoints inside the community.
    pub intra_edges: usize,
    /// Sum of in-degrees of the community's nodes.
    pub k_in: usize,
    /// Sum of out-degrees of the community's nodes.
    pub k_out: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModularityBreakdown {
    pub object: CommunityStats,
    pub background: CommunityStats,
    pub cross_edges: usize,
    pub total_edges: usize,
}

impl ModularityBreakdown {
    pub fn score(&self, variant: ModularityVariant) -> f64 {
        let e = self.total_edges as f64;
        [self.object, self.background]
            .iter()
            .map(|c| {
                let frac = c.intra_edges as f64 / e;
                let kk = c.k_in as f64 * c.k_out as f64;
                match variant {
                    ModularityVariant::Printed => {
                        let t = kk / (2.0 * e);
                        frac - t * t
                    }
                    ModularityVariant::LeichtNewman => frac - kk / (e * e),
                }
            })
            .sum()
    }
}

/// Two-community modularity of a directed layer graph with communities
/// given by the object mask.
///
/// With the printed variant an empty community contributes exactly 0 and
/// an all-object mask gives `1 − (|E|/2)²`, far below zero for real graphs.
pub fn modularity<T: Scalar>(g: &LayerGraph<T>, m: &PatchMask) -> Result<(f64, ModularityBreakdown), MetricsError> {
    modularity_with(g, m, ModularityVariant::Printed)
}

pub fn modularity_with<T: Scalar>(
    g: &LayerGraph<T>,
    m: &PatchMask,
    variant: ModularityVariant,
) -> Result<(f64, ModularityBreakdown), MetricsError> {
    if m.len() != g.num_nodes() {
        return Err(MetricsError::Shape(format!(
            "mask covers {} nodes, graph has {}",
            m.len(),
            g.num_nodes()
        )));
    }
    let total = g.num_edges();
    if total == 0 {
        return Err(MetricsError::EmptyGraph { layer: g.layer });
    }
    let mut object = CommunityStats::default();
    let mut background = CommunityStats::default();
    let mut cross = 0;
    for e in g.edges() {
        if e.src >= m.len() {
            return Err(MetricsError::Shape(format!("edge source {} out of range", e.src)));
        }
        let (src_obj, dst_obj) = (m.is_object(e.src), m.is_object(e.dst));
        if src_obj {
            object.k_out += 1;
        } else {
            background.k_out += 1;
        }
        if dst_obj {
            object.k_in += 1;
        } else {
            background.k_in += 1;
        }
        match (src_obj, dst_obj) {
            (true, true) => object.intra_edges += 1,
            (false, false) => background.intra_edges += 1,
            _ => cross += 1,
        }
    }
    let b = ModularityBreakdown {
        object,
        background,
        cross_edges: cross,
        total_edges: total,
    };
    Ok((b.score(variant), b))
}
