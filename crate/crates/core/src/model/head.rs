//! Classification head: mean pooling, linear classifier, softmax.

use serde::{Deserialize, Serialize};

use super::{ModelError, ModelWeights, NodeFeatures};
use crate::linalg::{Linear, Matrix};
use crate::scalar::Scalar;

/// Logits and softmax probabilities of the head at one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadOutput<T> {
    pub logits: Vec<T>,
    pub probs: Vec<T>,
}

impl<T: Scalar> HeadOutput<T> {
    pub fn from_logits(logits: Vec<T>) -> Self {
        let probs = softmax(&logits);
        Self { logits, probs }
    }

    /// Index of the largest probability; ties go to the smaller class.
    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }
}

pub fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &p) in v.iter().enumerate().skip(1) {
        if p > v[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax (max subtracted before exponentiation).
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Mean over node rows followed by the linear head; returns logits.
pub fn head_logits<T: Scalar>(x: &Matrix<T>, head: &Linear<T>) -> Result<Vec<T>, ModelError> {
    if x.cols() != head.in_dim() {
        return Err(ModelError::Shape(format!(
            "head expects D={}, features have D={}",
            head.in_dim(),
            x.cols()
        )));
    }
    if x.rows() == 0 {
        return Err(ModelError::Shape("cannot pool zero nodes".into()));
    }
    let mut pooled = vec![T::zero(); x.cols()];
    for row in x.iter_rows() {
        for (p, &v) in pooled.iter_mut().zip(row) {
            *p += v;
        }
    }
    let n = T::lit(x.rows() as f64);
    for p in &mut pooled {
        *p = *p / n;
    }
    let pooled = Matrix::from_vec(1, pooled.len(), pooled).expect("one row");
    Ok(head.forward(&pooled).into_vec())
}

/// Head output (logits + probabilities) for features at any layer.
pub fn head_output<T: Scalar>(x: &NodeFeatures<T>, w: &ModelWeights<T>) -> Result<HeadOutput<T>, ModelError> {
    head_logits(&x.values, &w.head).map(HeadOutput::from_logits)
}

/// Class probabilities of the shared head applied to `x`.
pub fn classify_head<T: Scalar>(x: &NodeFeatures<T>, w: &ModelWeights<T>) -> Result<Vec<T>, ModelError> {
    head_output(x, w).map(|h| h.probs)
}
