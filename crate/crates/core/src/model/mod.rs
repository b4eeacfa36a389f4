//! Isotropic Vision GNN forward pass.
//!
//! The pipeline is: patch projection plus positional encodings (the stem),
//! then `L` blocks that each rebuild a KNN graph from their input features,
//! run a max-relative graph convolution between two linear maps, and apply
//! a GELU feed-forward network, both with residual connections. A single
//! mean-pool + linear head can read out any layer.

mod config;
mod conv;
mod graph;
mod head;
mod io;
mod weights;

pub use config::{ConfigError, ModelConfig};
pub use conv::max_relative_conv;
pub use graph::{knn_graph, Edge, GraphViolation, LayerGraph};
pub use head::{argmax, classify_head, head_logits, head_output, softmax, HeadOutput};
pub use io::{
    decode_weights, encode_weights, load_weights, save_weights, WeightsError, WEIGHTS_MAGIC, WEIGHTS_VERSION,
};
pub use weights::{init_weights, BlockWeights, ModelWeights, UpdateWeights};

use thiserror::Error;

use crate::imaging::{flatten, PatchGrid};
use crate::linalg::{gelu, Linear, Matrix};
use crate::scalar::Scalar;
use crate::trace::Trace;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(#[from] ConfigError),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("K={k} needs at least {} nodes, have {nodes}", k + 1)]
    NeighborCount { k: usize, nodes: usize },
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
}

/// Node embedding matrix `X^l` (`N × D`) tagged with its layer.
///
/// Layer 0 is the stem output; layer `l ≥ 1` is the output of block `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatures<T> {
    pub values: Matrix<T>,
    pub layer: usize,
}

impl<T: Scalar> NodeFeatures<T> {
    pub fn new(values: Matrix<T>, layer: usize) -> Self {
        Self { values, layer }
    }

    pub fn num_nodes(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn cast<U: Scalar>(&self) -> NodeFeatures<U> {
        NodeFeatures {
            values: self.values.cast(),
            layer: self.layer,
        }
    }
}

/// Row-wise `patches · proj + bias + pos`.
pub fn embed_patches<T: Scalar>(
    patches: &Matrix<T>,
    proj: &Linear<T>,
    pos: &Matrix<T>,
) -> Result<Matrix<T>, ModelError> {
    if patches.cols() != proj.in_dim() {
        return Err(ModelError::Shape(format!(
            "patch vectors have {} values, projection expects {}",
            patches.cols(),
            proj.in_dim()
        )));
    }
    if pos.shape() != (patches.rows(), proj.out_dim()) {
        return Err(ModelError::Shape(format!(
            "positional encodings {:?}, expected {:?}",
            pos.shape(),
            (patches.rows(), proj.out_dim())
        )));
    }
    Ok(proj.forward(patches).add(pos))
}

/// Initial node features `X^0` of a patch grid.
pub fn stem<T: Scalar>(grid: &PatchGrid, w: &ModelWeights<T>) -> Result<NodeFeatures<T>, ModelError> {
    let rows: Vec<Vec<T>> = grid.patches().iter().map(flatten).collect();
    let patches = Matrix::from_rows(&rows).expect("patches share a length");
    let x0 = embed_patches(&patches, &w.stem, &w.pos_enc)?;
    Ok(NodeFeatures::new(x0, 0))
}

/// One grapher + FFN block.
///
/// The graph is built on the block input. Then
/// `z = x + W_out(conv(W_in x, g))` and `y = z + W2·gelu(W1·z)`.
pub fn vig_block<T: Scalar>(
    x: &NodeFeatures<T>,
    bw: &BlockWeights<T>,
    k: usize,
) -> Result<(NodeFeatures<T>, LayerGraph<T>), ModelError> {
    let g = knn_graph(x, k)?;
    let dim = x.dim();
    if bw.w_in.in_dim() != dim || bw.w_out.out_dim() != dim || bw.ffn2.out_dim() != dim {
        return Err(ModelError::Shape(format!("block weights do not match D={dim}")));
    }
    let u = bw.w_in.forward(&x.values);
    let c = max_relative_conv(&u, &g, &bw.update)?;
    let z = x.values.add(&bw.w_out.forward(&c));
    let hidden = bw.ffn1.forward(&z).map(gelu);
    let y = z.add(&bw.ffn2.forward(&hidden));
    Ok((NodeFeatures::new(y, x.layer + 1), g))
}

/// Full forward pass recording every layer's features, graph and head
/// output.
///
/// `cfg` must match the weight shapes; it may differ from
/// `w.config` in the neighbor schedule (`k`, `k_end`) and seed.
pub fn forward<T: Scalar>(grid: &PatchGrid, w: &ModelWeights<T>, cfg: &ModelConfig) -> Result<Trace<T>, ModelError> {
    cfg.validate()?;
    if !cfg.same_shapes(&w.config) {
        return Err(ModelError::Shape(
            "run config does not match the weights' layer/dim/class/head layout".into(),
        ));
    }
    w.check_shapes()?;
    let mut x = stem(grid, w)?;
    let mut features = Vec::with_capacity(cfg.num_layers + 1);
    let mut graphs = Vec::with_capacity(cfg.num_layers);
    let mut heads = Vec::with_capacity(cfg.num_layers);
    features.push(x.clone());
    for (l, bw) in w.blocks.iter().enumerate() {
        let (y, g) = vig_block(&x, bw, cfg.k_at(l + 1))?;
        heads.push(head_output(&y, w)?);
        graphs.push(g);
        features.push(y.clone());
        x = y;
    }
    let prediction = heads.last().map_or(0, HeadOutput::argmax);
    Ok(Trace {
        config: cfg.clone(),
        features: Some(features),
        graphs,
        heads,
        prediction,
        label: None,
    })
}

/// Final-layer head output without recording intermediate state.
pub fn predict<T: Scalar>(
    grid: &PatchGrid,
    w: &ModelWeights<T>,
    cfg: &ModelConfig,
) -> Result<HeadOutput<T>, ModelError> {
    cfg.validate()?;
    w.check_shapes()?;
    let mut x = stem(grid, w)?;
    for (l, bw) in w.blocks.iter().enumerate() {
        x = vig_block(&x, bw, cfg.k_at(l + 1))?.0;
    }
    head_output(&x, w)
}
