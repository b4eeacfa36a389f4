use std::fs;
use std::path::Path;

use super::font::{draw_text, text_width, GLYPH_H};
use super::HeatmapError;
use crate::imaging::{save_png, ImageRgb};
use crate::metrics::LayerMetrics;

const WIDTH: usize = 640;
const HEIGHT: usize = 360;
const LEFT: usize = 56;
const RIGHT: usize = 488;
const TOP: usize = 20;
const BOTTOM: usize = 320;
const BACKGROUND: [u8; 3] = [255, 255, 255];
const AXIS: [u8; 3] = [40, 40, 40];
const GRID: [u8; 3] = [225, 225, 225];

/// Plotted metrics: name, fixed value range, color.
///
/// Each series is scaled into its own fixed range and clamped, so the
/// y axis reads as a fraction of that range.
pub const CURVE_METRICS: [(&str, f64, f64, [u8; 3]); 5] = [
    ("S_vis", -1.0, 1.0, [31, 119, 180]),
    ("D", 0.0, 26.0, [255, 127, 14]),
    ("S_emb", -1.0, 1.0, [44, 160, 44]),
    ("Q", -1.0, 1.0, [214, 39, 40]),
    ("p", 0.0, 1.0, [148, 103, 189]),
];

fn value(m: &LayerMetrics, metric: usize) -> Option<f64> {
    match metric {
        0 => Some(m.s_vis),
        1 => Some(m.distance),
        2 => Some(m.s_emb),
        3 => m.q,
        _ => m.p,
    }
}

/// Pixel polyline of one metric. Layers without a value are skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSeries {
    pub name: &'static str,
    pub color: [u8; 3],
    /// `(layer, x, y)` in image pixels.
    pub points: Vec<(usize, usize, usize)>,
}

fn x_of(idx: usize, n: usize) -> usize {
    if n <= 1 {
        return (LEFT + RIGHT) / 2;
    }
    LEFT + (idx * (RIGHT - LEFT) + (n - 1) / 2) / (n - 1)
}

fn y_of(v: f64, lo: f64, hi: f64) -> usize {
    let t = if v.is_finite() {
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    BOTTOM - ((BOTTOM - TOP) as f64 * t).round() as usize
}

pub fn curve_series(metrics: &[LayerMetrics]) -> Vec<CurveSeries> {
    CURVE_METRICS
        .iter()
        .enumerate()
        .map(|(k, &(name, lo, hi, color))| CurveSeries {
            name,
            color,
            points: metrics
                .iter()
                .enumerate()
                .filter_map(|(idx, m)| value(m, k).map(|v| (m.layer, x_of(idx, metrics.len()), y_of(v, lo, hi))))
                .collect(),
        })
        .collect()
}

fn put(img: &mut ImageRgb, x: i64, y: i64, c: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as usize) < img.width() && (y as usize) < img.height() {
        img.put_pixel(x as usize, y as usize, c);
    }
}

fn line(img: &mut ImageRgb, (x0, y0): (usize, usize), (x1, y1): (usize, usize), c: [u8; 3]) {
    let (mut x, mut y) = (x0 as i64, y0 as i64);
    let (x1, y1) = (x1 as i64, y1 as i64);
    let dx = (x1 - x).abs();
    let dy = -(y1 - y).abs();
    let sx = if x < x1 { 1 } else { -1 };
    let sy = if y < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        put(img, x, y, c);
        put(img, x, y + 1, c);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn fill(img: &mut ImageRgb, x0: usize, y0: usize, w: usize, h: usize, c: [u8; 3]) {
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            put(img, x as i64, y as i64, c);
        }
    }
}

fn plot(metrics: &[LayerMetrics]) -> Result<ImageRgb, HeatmapError> {
    let mut img = ImageRgb::filled(WIDTH, HEIGHT, BACKGROUND)?;
    for q in 0..=4 {
        let y = TOP + q * (BOTTOM - TOP) / 4;
        line(&mut img, (LEFT, y), (RIGHT, y), GRID);
        let label = ["1.0", "0.75", "0.5", "0.25", "0.0"][q];
        draw_text(&mut img, LEFT - 6 - text_width(label, 2), y - GLYPH_H, label, 2, AXIS);
    }
    line(&mut img, (LEFT, TOP), (LEFT, BOTTOM), AXIS);
    line(&mut img, (LEFT, BOTTOM), (RIGHT, BOTTOM), AXIS);
    for (idx, m) in metrics.iter().enumerate() {
        let x = x_of(idx, metrics.len());
        line(&mut img, (x, BOTTOM), (x, BOTTOM + 4), AXIS);
        let label = m.layer.to_string();
        draw_text(
            &mut img,
            x.saturating_sub(text_width(&label, 2) / 2),
            BOTTOM + 8,
            &label,
            2,
            AXIS,
        );
    }
    let title = "LAYER";
    draw_text(
        &mut img,
        (LEFT + RIGHT - text_width(title, 2)) / 2,
        BOTTOM + 26,
        title,
        2,
        AXIS,
    );

    for s in curve_series(metrics) {
        for w in s.points.windows(2) {
            line(&mut img, (w[0].1, w[0].2), (w[1].1, w[1].2), s.color);
        }
        for &(_, x, y) in &s.points {
            fill(&mut img, x - 2, y - 2, 5, 5, s.color);
        }
    }

    for (k, &(name, lo, hi, color)) in CURVE_METRICS.iter().enumerate() {
        let y = TOP + 8 + k * 22;
        fill(&mut img, RIGHT + 16, y, 14, 10, color);
        let label = format!("{name} [{lo},{hi}]");
        draw_text(&mut img, RIGHT + 36, y, &label, 2, AXIS);
    }
    Ok(img)
}

fn field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `<out>.csv` (one row per layer) and `<out>.png` (line plot).
pub fn render_metric_curves(metrics: &[LayerMetrics], out: &Path) -> Result<(), HeatmapError> {
    if metrics.is_empty() {
        return Err(HeatmapError::Spec("no layers to plot".into()));
    }
    let mut csv = String::from("layer,S_vis,D,S_emb,Q,p\n");
    for m in metrics {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            m.layer,
            m.s_vis,
            m.distance,
            m.s_emb,
            field(m.q),
            field(m.p)
        ));
    }
    let csv_path = out.with_extension("csv");
    fs::write(&csv_path, csv).map_err(|source| HeatmapError::Io { path: csv_path, source })?;
    save_png(&plot(metrics)?, out.with_extension("png"))?;
    Ok(())
}
