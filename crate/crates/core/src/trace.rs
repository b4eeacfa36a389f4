//! Per-image record of a forward pass and its on-disk container.
//!
//! The file starts with a text header, one `key value` pair per line:
//!
//! ```text
//! VIGXRAY-TRACE 1
//! layers 16
//! nodes 196
//! dim 64
//! k 9
//! k_end -
//! classes 10
//! heads 1
//! ffn_ratio 4
//! seed 7
//! label 3            (or -)
//! prediction 3
//! features 1         (0 when feature payloads were elided)
//! end
//! ```
//!
//! followed by little-endian binary sections, each opened by a 4-byte tag:
//!
//! * `FEAT` (L+1 of them, only with `features 1`): u32 layer, u32 rows,
//!   u32 cols, rows × cols f32.
//! * `GRPH` (L): u32 layer, u32 nodes, then per destination node u32 count,
//!   count × u32 source indices, count × f32 edge similarities.
//! * `HEAD` (L): u32 layer, u32 classes, classes × f32 logits,
//!   classes × f32 probabilities.
//! * `DONE` trailer.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::codec::{put_f32s, put_u32, ByteReader, Truncated};
use crate::imaging::NUM_PATCHES;
use crate::linalg::Matrix;
use crate::model::{argmax, HeadOutput, LayerGraph, ModelConfig, NodeFeatures};
use crate::scalar::Scalar;

pub const TRACE_MAGIC: &str = "VIGXRAY-TRACE";
pub const TRACE_VERSION: u32 = 1;

/// Tolerance on `Σ p = 1` for stored probability rows.
pub const PROB_SUM_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported trace version {found} (expected {TRACE_VERSION})")]
    Version { found: String },
    #[error("malformed trace: {0}")]
    Format(String),
    #[error("truncated trace: {0}")]
    Truncated(String),
    #[error("trace invariant violated at layer {layer}{}: {reason}", node.map(|n| format!(", node {n}")).unwrap_or_default())]
    Invariant {
        layer: usize,
        node: Option<usize>,
        reason: String,
    },
}

impl From<Truncated> for TraceError {
    fn from(t: Truncated) -> Self {
        TraceError::Truncated(t.context)
    }
}

fn invariant(layer: usize, node: Option<usize>, reason: impl Into<String>) -> TraceError {
    TraceError::Invariant {
        layer,
        node,
        reason: reason.into(),
    }
}

/// Everything recorded during one forward pass.
///
/// `features[l]` is `X^l` for `l = 0..=L`; `graphs[l-1]` and `heads[l-1]`
/// belong to layer `l`. The graph of layer `l` was built from `X^{l-1}`
/// and its edge similarities are cosines over those features. Features
/// may be absent when elided to save space.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace<T> {
    pub config: ModelConfig,
    pub features: Option<Vec<NodeFeatures<T>>>,
    pub graphs: Vec<LayerGraph<T>>,
    pub heads: Vec<HeadOutput<T>>,
    pub prediction: usize,
    pub label: Option<usize>,
}

impl<T: Scalar> Trace<T> {
    pub fn num_layers(&self) -> usize {
        self.graphs.len()
    }

    /// Features `X^l`, if recorded.
    pub fn features_at(&self, layer: usize) -> Option<&NodeFeatures<T>> {
        self.features.as_ref().and_then(|f| f.get(layer))
    }

    /// Graph of layer `l` (1-based).
    pub fn graph(&self, layer: usize) -> Option<&LayerGraph<T>> {
        layer.checked_sub(1).and_then(|i| self.graphs.get(i))
    }

    /// Head output at layer `l` (1-based).
    pub fn head(&self, layer: usize) -> Option<&HeadOutput<T>> {
        layer.checked_sub(1).and_then(|i| self.heads.get(i))
    }

    pub fn without_features(mut self) -> Self {
        self.features = None;
        self
    }

    pub fn with_label(mut self, label: Option<usize>) -> Self {
        self.label = label;
        self
    }

    /// Checks all structural invariants.
    pub fn validate(&self) -> Result<(), TraceError> {
        let cfg = &self.config;
        cfg.validate()
            .map_err(|e| TraceError::Format(format!("header config: {e}")))?;
        let l_count = cfg.num_layers;
        if self.graphs.len() != l_count {
            return Err(invariant(
                0,
                None,
                format!("{} graphs for {l_count} layers", self.graphs.len()),
            ));
        }
        if self.heads.len() != l_count {
            return Err(invariant(
                0,
                None,
                format!("{} head outputs for {l_count} layers", self.heads.len()),
            ));
        }
        if let Some(f) = &self.features {
            if f.len() != l_count + 1 {
                return Err(invariant(
                    0,
                    None,
                    format!("{} feature blocks, expected {}", f.len(), l_count + 1),
                ));
            }
            for (l, x) in f.iter().enumerate() {
                if x.layer != l {
                    return Err(invariant(l, None, format!("feature block tagged layer {}", x.layer)));
                }
                if x.values.shape() != (NUM_PATCHES, cfg.hidden_dim) {
                    return Err(invariant(l, None, format!("features shaped {:?}", x.values.shape())));
                }
                if !x.values.is_finite() {
                    return Err(invariant(l, None, "non-finite features"));
                }
            }
        }
        for (idx, g) in self.graphs.iter().enumerate() {
            let layer = idx + 1;
            if g.layer != layer {
                return Err(invariant(layer, None, format!("graph tagged layer {}", g.layer)));
            }
            if g.num_nodes() != NUM_PATCHES {
                return Err(invariant(layer, None, format!("graph has {} nodes", g.num_nodes())));
            }
            g.validate(Some(cfg.k_at(layer)))
                .map_err(|v| invariant(v.layer, v.node, v.reason))?;
        }
        for (idx, h) in self.heads.iter().enumerate() {
            let layer = idx + 1;
            if h.logits.len() != cfg.num_classes || h.probs.len() != cfg.num_classes {
                return Err(invariant(layer, None, "head output length differs from class count"));
            }
            if h.probs.iter().chain(&h.logits).any(|v| !v.is_finite()) {
                return Err(invariant(layer, None, "non-finite head output"));
            }
            if h.probs.iter().any(|&p| p < T::zero()) {
                return Err(invariant(layer, None, "negative probability"));
            }
            let sum: f64 = h.probs.iter().map(|p| p.as_f64()).sum();
            if (sum - 1.0).abs() > PROB_SUM_TOL {
                return Err(invariant(layer, None, format!("probabilities sum to {sum}")));
            }
        }
        if let Some(last) = self.heads.last() {
            if argmax(&last.probs) != self.prediction {
                return Err(invariant(l_count, None, "prediction is not the final-layer argmax"));
            }
        }
        if let Some(y) = self.label {
            if y >= cfg.num_classes {
                return Err(TraceError::Format(format!("label {y} outside 0..{}", cfg.num_classes)));
            }
        }
        Ok(())
    }
}

fn opt(v: Option<usize>) -> String {
    v.map_or_else(|| "-".into(), |v| v.to_string())
}

/// Serializes a trace; scalars are stored as `f32`.
pub fn encode_trace<T: Scalar>(t: &Trace<T>) -> Vec<u8> {
    let c = &t.config;
    let mut header = String::new();
    let _ = writeln!(header, "{TRACE_MAGIC} {TRACE_VERSION}");
    let _ = writeln!(header, "layers {}", c.num_layers);
    let _ = writeln!(header, "nodes {NUM_PATCHES}");
    let _ = writeln!(header, "dim {}", c.hidden_dim);
    let _ = writeln!(header, "k {}", c.k);
    let _ = writeln!(header, "k_end {}", opt(c.k_end));
    let _ = writeln!(header, "classes {}", c.num_classes);
    let _ = writeln!(header, "heads {}", c.num_heads);
    let _ = writeln!(header, "ffn_ratio {}", c.ffn_ratio);
    let _ = writeln!(header, "seed {}", c.seed);
    let _ = writeln!(header, "label {}", opt(t.label));
    let _ = writeln!(header, "prediction {}", t.prediction);
    let _ = writeln!(header, "features {}", t.features.is_some() as u8);
    header.push_str("end\n");

    let mut out = header.into_bytes();
    let f32s = |v: &[T]| v.iter().map(|x| x.to_f32_lossy()).collect::<Vec<_>>();
    if let Some(features) = &t.features {
        for x in features {
            out.extend_from_slice(b"FEAT");
            put_u32(&mut out, x.layer as u32);
            put_u32(&mut out, x.values.rows() as u32);
            put_u32(&mut out, x.values.cols() as u32);
            put_f32s(&mut out, f32s(x.values.as_slice()));
        }
    }
    for g in &t.graphs {
        out.extend_from_slice(b"GRPH");
        put_u32(&mut out, g.layer as u32);
        put_u32(&mut out, g.num_nodes() as u32);
        for (srcs, sims) in g.in_neighbors.iter().zip(&g.edge_sims) {
            put_u32(&mut out, srcs.len() as u32);
            for &j in srcs {
                put_u32(&mut out, j as u32);
            }
            put_f32s(&mut out, f32s(sims));
        }
    }
    for (idx, h) in t.heads.iter().enumerate() {
        out.extend_from_slice(b"HEAD");
        put_u32(&mut out, (idx + 1) as u32);
        put_u32(&mut out, h.logits.len() as u32);
        put_f32s(&mut out, f32s(&h.logits));
        put_f32s(&mut out, f32s(&h.probs));
    }
    out.extend_from_slice(b"DONE");
    out
}

pub fn write_trace<T: Scalar>(t: &Trace<T>, path: impl AsRef<Path>) -> Result<(), TraceError> {
    let path = path.as_ref();
    fs::write(path, encode_trace(t)).map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Trace<f32>, TraceError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_trace(&bytes)
}

struct Header {
    config: ModelConfig,
    nodes: usize,
    label: Option<usize>,
    prediction: usize,
    has_features: bool,
}

fn parse_header(text: &str) -> Result<Header, TraceError> {
    let mut lines = text.lines();
    let first = lines.next().unwrap_or_default();
    let version = first
        .strip_prefix(TRACE_MAGIC)
        .map(str::trim)
        .ok_or_else(|| TraceError::Format("missing trace magic".into()))?;
    if version != TRACE_VERSION.to_string() {
        return Err(TraceError::Version {
            found: version.to_owned(),
        });
    }
    let mut get = |key: &str| -> Result<String, TraceError> {
        let line = lines
            .next()
            .ok_or_else(|| TraceError::Format(format!("header ends before `{key}`")))?;
        let (k, v) = line
            .split_once(' ')
            .ok_or_else(|| TraceError::Format(format!("bad header line {line:?}")))?;
        if k != key {
            return Err(TraceError::Format(format!("expected `{key}`, found `{k}`")));
        }
        Ok(v.trim().to_owned())
    };
    fn num(key: &str, v: &str) -> Result<usize, TraceError> {
        v.parse()
            .map_err(|_| TraceError::Format(format!("`{key}` value {v:?} is not an integer")))
    }
    fn opt_num(key: &str, v: &str) -> Result<Option<usize>, TraceError> {
        if v == "-" {
            Ok(None)
        } else {
            num(key, v).map(Some)
        }
    }
    let num_layers = num("layers", &get("layers")?)?;
    let nodes = num("nodes", &get("nodes")?)?;
    let hidden_dim = num("dim", &get("dim")?)?;
    let k = num("k", &get("k")?)?;
    let k_end = opt_num("k_end", &get("k_end")?)?;
    let num_classes = num("classes", &get("classes")?)?;
    let num_heads = num("heads", &get("heads")?)?;
    let ffn_ratio = num("ffn_ratio", &get("ffn_ratio")?)?;
    let seed_s = get("seed")?;
    let seed = seed_s
        .parse()
        .map_err(|_| TraceError::Format(format!("seed {seed_s:?} is not an integer")))?;
    let label = opt_num("label", &get("label")?)?;
    let prediction = num("prediction", &get("prediction")?)?;
    let has_features = match get("features")?.as_str() {
        "1" => true,
        "0" => false,
        other => return Err(TraceError::Format(format!("features flag {other:?}"))),
    };
    Ok(Header {
        config: ModelConfig {
            num_layers,
            hidden_dim,
            k,
            k_end,
            num_classes,
            num_heads,
            ffn_ratio,
            seed,
        },
        nodes,
        label,
        prediction,
        has_features,
    })
}

fn expect_tag(r: &mut ByteReader<'_>, tag: &[u8; 4]) -> Result<(), TraceError> {
    let got = r.take(4, "section tag")?;
    if got != tag {
        return Err(TraceError::Format(format!(
            "expected section {:?} at offset {}, found {:?}",
            String::from_utf8_lossy(tag),
            r.position() - 4,
            String::from_utf8_lossy(got)
        )));
    }
    Ok(())
}

/// Parses and validates a trace.
pub fn decode_trace(bytes: &[u8]) -> Result<Trace<f32>, TraceError> {
    const END: &[u8] = b"\nend\n";
    if !bytes.starts_with(TRACE_MAGIC.as_bytes()) {
        return Err(TraceError::Format("missing trace magic".into()));
    }
    let split = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| TraceError::Truncated("header terminator not found".into()))?
        + END.len();
    let text = std::str::from_utf8(&bytes[..split]).map_err(|_| TraceError::Format("header is not UTF-8".into()))?;
    let h = parse_header(text)?;
    if h.nodes != NUM_PATCHES {
        return Err(TraceError::Format(format!("{} nodes, expected {NUM_PATCHES}", h.nodes)));
    }
    let cfg = &h.config;
    let l_count = cfg.num_layers;
    let mut r = ByteReader::new(&bytes[split..]);

    let features = if h.has_features {
        let mut f = Vec::with_capacity(l_count + 1);
        for l in 0..=l_count {
            expect_tag(&mut r, b"FEAT")?;
            let layer = r.u32("feature layer")? as usize;
            let rows = r.u32("feature rows")? as usize;
            let cols = r.u32("feature cols")? as usize;
            if layer != l || rows != h.nodes || cols != cfg.hidden_dim {
                return Err(invariant(
                    l,
                    None,
                    format!("feature block (layer {layer}, {rows}x{cols}) does not match header"),
                ));
            }
            let data = r.f32_vec(rows * cols, "feature payload")?;
            f.push(NodeFeatures::new(
                Matrix::from_vec(rows, cols, data).expect("sized"),
                layer,
            ));
        }
        Some(f)
    } else {
        None
    };

    let mut graphs = Vec::with_capacity(l_count);
    for l in 1..=l_count {
        expect_tag(&mut r, b"GRPH")?;
        let layer = r.u32("graph layer")? as usize;
        let nodes = r.u32("graph nodes")? as usize;
        if layer != l {
            return Err(invariant(l, None, format!("graph section tagged layer {layer}")));
        }
        if nodes != h.nodes {
            return Err(invariant(l, None, format!("graph has {nodes} nodes")));
        }
        let k = cfg.k_at(l);
        let mut in_neighbors = Vec::with_capacity(nodes);
        let mut edge_sims = Vec::with_capacity(nodes);
        for i in 0..nodes {
            let count = r.u32("neighbor count")? as usize;
            if count != k {
                return Err(invariant(l, Some(i), format!("{count} in-neighbors, expected K={k}")));
            }
            let srcs: Vec<usize> = r
                .u32_vec(count, "neighbor list")?
                .into_iter()
                .map(|j| j as usize)
                .collect();
            in_neighbors.push(srcs);
            edge_sims.push(r.f32_vec(count, "edge similarities")?);
        }
        graphs.push(LayerGraph {
            layer,
            in_neighbors,
            edge_sims,
        });
    }

    let mut heads = Vec::with_capacity(l_count);
    for l in 1..=l_count {
        expect_tag(&mut r, b"HEAD")?;
        let layer = r.u32("head layer")? as usize;
        let classes = r.u32("head classes")? as usize;
        if layer != l || classes != cfg.num_classes {
            return Err(invariant(
                l,
                None,
                format!("head section (layer {layer}, {classes} classes) does not match header"),
            ));
        }
        let logits = r.f32_vec(classes, "logits")?;
        let probs = r.f32_vec(classes, "probabilities")?;
        heads.push(HeadOutput { logits, probs });
    }
    expect_tag(&mut r, b"DONE")?;
    if r.remaining() != 0 {
        return Err(TraceError::Format(format!("{} trailing bytes", r.remaining())));
    }
    let trace = Trace {
        config: h.config,
        features,
        graphs,
        heads,
        prediction: h.prediction,
        label: h.label,
    };
    trace.validate()?;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{partition, ImageRgb};
    use crate::model::{forward, init_weights};

    fn sample(layers: usize, dim: usize) -> Trace<f32> {
        let cfg = ModelConfig {
            num_layers: layers,
            hidden_dim: dim,
            k: 5,
            num_classes: 4,
            seed: 1,
            ..Default::default()
        };
        let w = init_weights::<f32>(&cfg).unwrap();
        let data = (0..224 * 224 * 3).map(|i| ((i / 3) % 200) as u8).collect();
        let grid = partition(&ImageRgb::new(224, 224, data).unwrap()).unwrap();
        forward(&grid, &w, &cfg).unwrap().with_label(Some(2))
    }

    fn count(hay: &[u8], needle: &[u8]) -> usize {
        hay.windows(needle.len()).filter(|w| *w == needle).count()
    }

    #[test]
    fn roundtrip() {
        let t = sample(2, 8);
        let back = decode_trace(&encode_trace(&t)).unwrap();
        assert_eq!(back, t);
        let elided = t.clone().without_features();
        assert_eq!(decode_trace(&encode_trace(&elided)).unwrap(), elided);
    }

    #[test]
    fn section_counts_for_single_layer() {
        let bytes = encode_trace(&sample(1, 8));
        assert_eq!(count(&bytes, b"FEAT"), 2);
        assert_eq!(count(&bytes, b"GRPH"), 1);
        assert_eq!(count(&bytes, b"HEAD"), 1);
    }

    #[test]
    fn wrong_neighbor_count_names_layer_and_node() {
        let mut t = sample(2, 8);
        t.graphs[1].in_neighbors[17].pop();
        t.graphs[1].edge_sims[17].pop();
        match decode_trace(&encode_trace(&t)) {
            Err(TraceError::Invariant { layer, node, .. }) => {
                assert_eq!((layer, node), (2, Some(17)));
            }
            other => panic!("expected invariant error, got {other:?}"),
        }
    }

    #[test]
    fn self_loop_rejected() {
        let mut t = sample(1, 8);
        t.graphs[0].in_neighbors[3][0] = 3;
        assert!(matches!(
            decode_trace(&encode_trace(&t)),
            Err(TraceError::Invariant {
                layer: 1,
                node: Some(3),
                ..
            })
        ));
    }

    #[test]
    fn wrong_version() {
        let mut b = encode_trace(&sample(1, 8));
        let pos = TRACE_MAGIC.len() + 1;
        b[pos] = b'7';
        assert!(matches!(decode_trace(&b), Err(TraceError::Version { .. })));
    }

    #[test]
    fn truncation() {
        let b = encode_trace(&sample(1, 8));
        for cut in [b.len() - 1, b.len() - 10, b.len() / 2] {
            assert!(matches!(decode_trace(&b[..cut]), Err(TraceError::Truncated(_))));
        }
        assert!(matches!(decode_trace(&b[..20]), Err(TraceError::Truncated(_))));
    }

    #[test]
    fn not_a_trace() {
        assert!(matches!(decode_trace(b"hello"), Err(TraceError::Format(_))));
    }

    #[test]
    fn bad_probabilities_rejected() {
        let mut t = sample(1, 8);
        t.heads[0].probs[0] += 0.01;
        assert!(matches!(
            decode_trace(&encode_trace(&t)),
            Err(TraceError::Invariant { layer: 1, .. })
        ));
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let t = sample(1, 8);
        assert!(matches!(
            write_trace(&t, "/nonexistent-dir/x/y.trace"),
            Err(TraceError::Io { .. })
        ));
    }
}
