use serde::{Deserialize, Serialize};

use super::{LayerMetrics, MetricsError};

/// One row of the dataset-level table: a group of consecutive layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    /// `"1-2"`, or `"3"` for single-layer groups.
    pub layers: String,
    pub first_layer: usize,
    pub last_layer: usize,
    pub s_vis: f64,
    pub distance: f64,
    pub s_emb: f64,
    pub q: Option<f64>,
    pub p: Option<f64>,
    /// Fraction of labeled images whose top-1 prediction is correct at the
    /// group's last layer.
    pub acc: Option<f64>,
}

#[derive(Default)]
struct Mean {
    sum: f64,
    n: usize,
}

impl Mean {
    fn push(&mut self, v: f64) {
        self.sum += v;
        self.n += 1;
    }

    fn get(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

#[derive(Default)]
struct GroupMeans {
    s_vis: Mean,
    dist: Mean,
    s_emb: Mean,
    q: Mean,
    p: Mean,
    top1: Mean,
}

/// Averages per-image reports over images and within groups of
/// `group_size` consecutive layers (2 gives the layer-pair table; a
/// trailing partial group is kept). Optional metrics are averaged over the
/// entries that carry them and stay absent if none do.
pub fn aggregate(reports: &[Vec<LayerMetrics>], group_size: usize) -> Result<Vec<AggregateRow>, MetricsError> {
    let first = reports.first().ok_or(MetricsError::NoReports)?;
    let layers = first.len();
    if layers == 0 {
        return Err(MetricsError::NoReports);
    }
    if let Some(bad) = reports.iter().find(|r| r.len() != layers) {
        return Err(MetricsError::LayerCountMismatch(layers, bad.len()));
    }
    let group_size = group_size.max(1);
    let mut rows = Vec::new();
    for start in (0..layers).step_by(group_size) {
        let end = (start + group_size).min(layers);
        let mut acc = GroupMeans::default();
        for report in reports {
            for m in &report[start..end] {
                acc.s_vis.push(m.s_vis);
                acc.dist.push(m.distance);
                acc.s_emb.push(m.s_emb);
                if let Some(v) = m.q {
                    acc.q.push(v);
                }
                if let Some(v) = m.p {
                    acc.p.push(v);
                }
            }
            if let Some(hit) = report[end - 1].top1_hit {
                acc.top1.push(hit as u8 as f64);
            }
        }
        let (first_layer, last_layer) = (first[start].layer, first[end - 1].layer);
        rows.push(AggregateRow {
            layers: if first_layer == last_layer {
                first_layer.to_string()
            } else {
                format!("{first_layer}-{last_layer}")
            },
            first_layer,
            last_layer,
            s_vis: acc.s_vis.get().unwrap_or(f64::NAN),
            distance: acc.dist.get().unwrap_or(f64::NAN),
            s_emb: acc.s_emb.get().unwrap_or(f64::NAN),
            q: acc.q.get(),
            p: acc.p.get(),
            acc: acc.top1.get(),
        });
    }
    Ok(rows)
}
