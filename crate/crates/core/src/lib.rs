//! Layer-wise inspection of isotropic Vision GNN models.
//!
//! An image becomes a 14×14 grid of patches, one graph node each. Every
//! layer rebuilds a k-nearest-neighbor graph over the node embeddings and
//! applies a max-relative graph convolution. [`model::forward`] records
//! all intermediate graphs, features and per-layer head outputs in a
//! [`trace::Trace`]; [`metrics`] scores each layer graph and [`heatmap`]
//! renders neighbor overlays.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`). The
//! aliases below fix the common `f32` case.

mod codec;
pub mod heatmap;
pub mod imaging;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod trace;

pub use scalar::Scalar;

pub type Weights = model::ModelWeights<f32>;
pub type Weights64 = model::ModelWeights<f64>;
pub type Features = model::NodeFeatures<f32>;
pub type Features64 = model::NodeFeatures<f64>;
pub type Graph = model::LayerGraph<f32>;
pub type Graph64 = model::LayerGraph<f64>;
pub type ForwardTrace = trace::Trace<f32>;
pub type ForwardTrace64 = trace::Trace<f64>;
