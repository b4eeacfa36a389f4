use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AggregateRow, LayerMetrics};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed metrics file {path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

impl ReportError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        ReportError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn format(path: &Path, reason: impl ToString) -> Self {
        ReportError::Format {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        }
    }

    fn from_csv(path: &Path, e: csv::Error) -> Self {
        if e.is_io_error() {
            if let csv::ErrorKind::Io(io) = e.into_kind() {
                return Self::io(path, io);
            }
            unreachable!()
        }
        Self::format(path, e)
    }
}

/// One `(image, layer)` row of a metrics file. Floats are written in
/// shortest round-trip form; absent values are empty fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub image_id: String,
    pub layer: usize,
    #[serde(rename = "S_vis")]
    pub s_vis: f64,
    #[serde(rename = "D")]
    pub distance: f64,
    #[serde(rename = "S_emb")]
    pub s_emb: f64,
    #[serde(rename = "Q")]
    pub q: Option<f64>,
    pub p: Option<f64>,
    pub top1_hit: Option<bool>,
}

impl MetricsRow {
    pub fn new(image_id: &str, m: &LayerMetrics) -> Self {
        MetricsRow {
            image_id: image_id.to_string(),
            layer: m.layer,
            s_vis: m.s_vis,
            distance: m.distance,
            s_emb: m.s_emb,
            q: m.q,
            p: m.p,
            top1_hit: m.top1_hit,
        }
    }

    pub fn to_metrics(&self) -> LayerMetrics {
        LayerMetrics {
            layer: self.layer,
            s_emb: self.s_emb,
            distance: self.distance,
            s_vis: self.s_vis,
            p: self.p,
            top1_hit: self.top1_hit,
            q: self.q,
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, ReportError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| ReportError::io(path, e))
}

pub fn write_metrics_csv(path: &Path, image_id: &str, metrics: &[LayerMetrics]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for m in metrics {
        w.serialize(MetricsRow::new(image_id, m))
            .map_err(|e| ReportError::from_csv(path, e))?;
    }
    w.flush().map_err(|e| ReportError::io(path, e))
}

/// Reads a file written by [`write_metrics_csv`]. All rows must carry the
/// same image id and strictly increasing layers.
pub fn read_metrics_csv(path: &Path) -> Result<(String, Vec<LayerMetrics>), ReportError> {
    let file = File::open(path).map_err(|e| ReportError::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let mut id: Option<String> = None;
    let mut out: Vec<LayerMetrics> = Vec::new();
    for row in r.deserialize::<MetricsRow>() {
        let row = row.map_err(|e| ReportError::from_csv(path, e))?;
        match &id {
            None => id = Some(row.image_id.clone()),
            Some(prev) if *prev != row.image_id => {
                return Err(ReportError::format(
                    path,
                    format!("mixed image ids {prev:?} and {:?}", row.image_id),
                ));
            }
            _ => {}
        }
        if out.last().is_some_and(|m| m.layer >= row.layer) {
            return Err(ReportError::format(path, format!("layer {} out of order", row.layer)));
        }
        out.push(row.to_metrics());
    }
    let id = id.ok_or_else(|| ReportError::format(path, "no rows"))?;
    Ok((id, out))
}

pub fn write_metrics_json(path: &Path, image_id: &str, metrics: &[LayerMetrics]) -> Result<(), ReportError> {
    let rows: Vec<MetricsRow> = metrics.iter().map(|m| MetricsRow::new(image_id, m)).collect();
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &rows).map_err(|e| ReportError::format(path, e))?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(|e| ReportError::io(path, e))
}

fn opt6(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Writes the layer-group table with columns
/// `layers,S_vis,D,S_emb,Q,p,acc` at six decimals.
pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let header = ["layers", "S_vis", "D", "S_emb", "Q", "p", "acc"];
    w.write_record(header).map_err(|e| ReportError::from_csv(path, e))?;
    for r in rows {
        w.write_record([
            r.layers.clone(),
            format!("{:.6}", r.s_vis),
            format!("{:.6}", r.distance),
            format!("{:.6}", r.s_emb),
            opt6(r.q),
            opt6(r.p),
            opt6(r.acc),
        ])
        .map_err(|e| ReportError::from_csv(path, e))?;
    }
    w.flush().map_err(|e| ReportError::io(path, e))
}

/// Human-readable version of the aggregate table, three decimals, `-` for
/// absent values.
pub fn format_table(rows: &[AggregateRow]) -> String {
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
    let mut s = format!(
        "{:<7} | {:>7} | {:>7} | {:>7} | {:>7} | {:>7} | {:>7}\n",
        "layers", "S_vis", "D", "S_emb", "Q", "p", "acc"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<7} | {:>7} | {:>7} | {:>7} | {:>7} | {:>7} | {:>7}",
            r.layers,
            cell(Some(r.s_vis)),
            cell(Some(r.distance)),
            cell(Some(r.s_emb)),
            cell(r.q),
            cell(r.p),
            cell(r.acc)
        );
    }
    s
}
