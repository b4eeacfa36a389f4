//! Connection heatmaps: the selected patch in green, its incoming
//! neighbors in red with intensity from the stored edge similarity.

mod curves;
mod font;

pub use curves::{curve_series, render_metric_curves, CurveSeries, CURVE_METRICS};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{GridCoord, ImageError, ImageRgb, INPUT_SIZE, NUM_PATCHES, PATCH_SIZE};
use crate::scalar::Scalar;
use crate::trace::Trace;

pub const SELECTION_ALPHA: f64 = 0.6;
pub const RED: [u8; 3] = [255, 0, 0];
pub const GREEN: [u8; 3] = [0, 255, 0];

#[derive(Debug, Error)]
pub enum HeatmapError {
    #[error("patch index {0} outside 0..196")]
    Patch(usize),
    #[error("layer {layer} outside 1..={layers}")]
    Layer { layer: usize, layers: usize },
    #[error("invalid heatmap settings: {0}")]
    Spec(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Normalization {
    /// Maps `[min, max]` of the neighbor set onto `[floor, ceiling]`.
    #[default]
    MinMax,
    /// Maps `(sim + 1) / 2` onto `[floor, ceiling]`.
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapSpec {
    pub patch: usize,
    pub layers: Vec<usize>,
    /// Output pixels per image pixel.
    pub scale: usize,
    pub floor: f64,
    pub ceiling: f64,
    pub mode: Normalization,
}

impl HeatmapSpec {
    pub fn new(patch: usize, layers: Vec<usize>) -> Self {
        HeatmapSpec {
            patch,
            layers,
            scale: 3,
            floor: 0.25,
            ceiling: 0.9,
            mode: Normalization::MinMax,
        }
    }

    pub fn at(coord: GridCoord, layers: Vec<usize>) -> Self {
        Self::new(coord.index(), layers)
    }

    /// Checks the spec against a model with `num_layers` layers.
    pub fn validate(&self, num_layers: usize) -> Result<(), HeatmapError> {
        if self.patch >= NUM_PATCHES {
            return Err(HeatmapError::Patch(self.patch));
        }
        if let Some(&layer) = self.layers.iter().find(|&&l| l == 0 || l > num_layers) {
            return Err(HeatmapError::Layer {
                layer,
                layers: num_layers,
            });
        }
        self.check_render()
    }

    fn check_render(&self) -> Result<(), HeatmapError> {
        if self.scale == 0 {
            return Err(HeatmapError::Spec("scale must be at least 1".into()));
        }
        let unit = 0.0..=1.0;
        if !unit.contains(&self.floor) || !unit.contains(&self.ceiling) || self.floor >= self.ceiling {
            return Err(HeatmapError::Spec(format!(
                "need 0 <= floor < ceiling <= 1, got {} and {}",
                self.floor, self.ceiling
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborIntensity {
    pub j: usize,
    pub sim: f64,
    pub alpha: f64,
}

/// Maps similarities to blend alphas in `[floor, ceiling]`.
pub fn intensities(sims: &[f64], floor: f64, ceiling: f64, mode: Normalization) -> Vec<f64> {
    let span = ceiling - floor;
    match mode {
        Normalization::MinMax => {
            let lo = sims.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = sims.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            sims.iter()
                .map(|&s| {
                    if hi > lo {
                        floor + (s - lo) / (hi - lo) * span
                    } else {
                        ceiling
                    }
                })
                .collect()
        }
        Normalization::Absolute => sims
            .iter()
            .map(|&s| floor + ((s + 1.0) / 2.0).clamp(0.0, 1.0) * span)
            .collect(),
    }
}

/// Incoming neighbors of patch `i` at layer `l`, in stored order.
pub fn neighbor_intensities<T: Scalar>(
    t: &Trace<T>,
    l: usize,
    i: usize,
    spec: &HeatmapSpec,
) -> Result<Vec<NeighborIntensity>, HeatmapError> {
    spec.check_render()?;
    let g = t.graph(l).ok_or(HeatmapError::Layer {
        layer: l,
        layers: t.num_layers(),
    })?;
    if i >= g.num_nodes() {
        return Err(HeatmapError::Patch(i));
    }
    let sims: Vec<f64> = g.edge_sims[i].iter().map(|s| s.as_f64()).collect();
    let alphas = intensities(&sims, spec.floor, spec.ceiling, spec.mode);
    Ok(g.in_neighbors[i]
        .iter()
        .zip(sims.iter().zip(alphas))
        .map(|(&j, (&sim, alpha))| NeighborIntensity { j, sim, alpha })
        .collect())
}

fn blend(p: [u8; 3], target: [u8; 3], alpha: f64) -> [u8; 3] {
    std::array::from_fn(|c| ((1.0 - alpha) * p[c] as f64 + alpha * target[c] as f64).round() as u8)
}

fn upscale(img: &ImageRgb, scale: usize) -> Result<ImageRgb, ImageError> {
    let (w, h) = (img.width() * scale, img.height() * scale);
    let mut data = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            data.extend_from_slice(&img.pixel(x / scale, y / scale));
        }
    }
    ImageRgb::new(w, h, data)
}

fn patch_pixels(i: usize, scale: usize) -> impl Iterator<Item = (usize, usize, bool)> {
    let GridCoord { row, col } = GridCoord::of_index(i);
    let side = PATCH_SIZE * scale;
    let border = 2 * scale;
    let (x0, y0) = (col * side, row * side);
    (0..side).flat_map(move |dy| {
        (0..side).map(move |dx| {
            let edge = dx < border || dy < border || dx >= side - border || dy >= side - border;
            (x0 + dx, y0 + dy, edge)
        })
    })
}

/// Draws the heatmap for selected patch `i` over a 224×224 image.
///
/// Neighbors are blended toward red first; the selection is then blended
/// toward green and outlined, so green wins on overlap.
pub fn render_heatmap(
    img: &ImageRgb,
    i: usize,
    entries: &[NeighborIntensity],
    spec: &HeatmapSpec,
) -> Result<ImageRgb, HeatmapError> {
    if img.width() != INPUT_SIZE || img.height() != INPUT_SIZE {
        return Err(ImageError::Dimensions {
            expected_w: INPUT_SIZE,
            expected_h: INPUT_SIZE,
            w: img.width(),
            h: img.height(),
        }
        .into());
    }
    spec.check_render()?;
    if i >= NUM_PATCHES {
        return Err(HeatmapError::Patch(i));
    }
    if let Some(e) = entries.iter().find(|e| e.j >= NUM_PATCHES) {
        return Err(HeatmapError::Patch(e.j));
    }
    let mut out = upscale(img, spec.scale)?;
    for e in entries {
        let alpha = e.alpha.clamp(0.0, 1.0);
        for (x, y, _) in patch_pixels(e.j, spec.scale) {
            out.put_pixel(x, y, blend(out.pixel(x, y), RED, alpha));
        }
    }
    for (x, y, edge) in patch_pixels(i, spec.scale) {
        let px = if edge {
            GREEN
        } else {
            blend(out.pixel(x, y), GREEN, SELECTION_ALPHA)
        };
        out.put_pixel(x, y, px);
    }
    Ok(out)
}

/// `<image>_<layer>_<r>_<c>.png`
pub fn heatmap_filename(image_id: &str, layer: usize, patch: usize) -> String {
    let GridCoord { row, col } = GridCoord::of_index(patch);
    format!("{image_id}_{layer}_{row}_{col}.png")
}
