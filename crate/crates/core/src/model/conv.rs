//! Max-relative graph convolution.

use super::{LayerGraph, ModelError, UpdateWeights};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Max-relative update: for node `i`, `m_i = max_{j ∈ N(i)} (x_j − x_i)`
/// elementwise (zero when `N(i)` is empty), and the output row is
/// `[x_i, m_i] · W_update + b`, applied per head on contiguous slices.
pub fn max_relative_conv<T: Scalar>(
    x: &Matrix<T>,
    g: &LayerGraph<T>,
    update: &UpdateWeights<T>,
) -> Result<Matrix<T>, ModelError> {
    let (n, dim) = x.shape();
    if g.num_nodes() != n {
        return Err(ModelError::Shape(format!(
            "graph has {} nodes, features have {n}",
            g.num_nodes()
        )));
    }
    let heads = update.heads.len();
    if heads == 0 || dim % heads != 0 || update.dim() != dim {
        return Err(ModelError::Shape(format!(
            "update for D={} with {heads} heads applied to D={dim}",
            update.dim()
        )));
    }
    let hd = dim / heads;
    if let Some(bad) = update.heads.iter().find(|m| m.shape() != (2 * hd, hd)) {
        return Err(ModelError::Shape(format!(
            "update head shaped {:?}, expected {:?}",
            bad.shape(),
            (2 * hd, hd)
        )));
    }

    let mut out = Matrix::zeros(n, dim);
    let mut rel = vec![T::zero(); dim];
    for (i, srcs) in g.in_neighbors.iter().enumerate() {
        let xi = x.row(i);
        rel.fill(T::neg_infinity());
        for &j in srcs {
            if j >= n {
                return Err(ModelError::Shape(format!("neighbor {j} of node {i} out of range")));
            }
            for ((m, &a), &b) in rel.iter_mut().zip(x.row(j)).zip(xi) {
                *m = m.max(a - b);
            }
        }
        if srcs.is_empty() {
            rel.fill(T::zero());
        }
        let o = out.row_mut(i);
        for (h, w) in update.heads.iter().enumerate() {
            let lo = h * hd;
            let os = &mut o[lo..lo + hd];
            os.copy_from_slice(&update.bias[lo..lo + hd]);
            let inputs = xi[lo..lo + hd].iter().chain(&rel[lo..lo + hd]);
            for (r, &v) in inputs.enumerate() {
                for (ov, &wv) in os.iter_mut().zip(w.row(r)) {
                    *ov += v * wv;
                }
            }
        }
    }
    Ok(out)
}
