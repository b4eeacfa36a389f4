//! Scalar abstraction shared by the model and metric kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type of features and weights.
///
/// Implemented for `f32` (the storage and default compute precision) and
/// `f64` (used by oracles and precision-sensitive checks).
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + AddAssign + MulAssign + Debug + Display + Default + Send + Sync + 'static
{
    fn from_f32_lossless(v: f32) -> Self;

    fn to_f32_lossy(self) -> f32;

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).unwrap_or_else(Self::nan)
    }
}

impl Scalar for f32 {
    #[inline]
    fn from_f32_lossless(v: f32) -> Self {
        v
    }

    #[inline]
    fn to_f32_lossy(self) -> f32 {
        self
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f32_lossless(v: f32) -> Self {
        v as f64
    }

    #[inline]
    fn to_f32_lossy(self) -> f32 {
        self as f32
    }
}

/// Cosine similarity with the zero-norm convention: if either vector has
/// zero length the similarity is 0.
pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let dot = dot(a, b);
    let na = dot_self(a).sqrt();
    let nb = dot_self(b).sqrt();
    cosine_from_parts(dot, na, nb)
}

#[inline]
pub(crate) fn cosine_from_parts<T: Scalar>(dot: T, na: T, nb: T) -> T {
    if na == T::zero() || nb == T::zero() {
        return T::zero();
    }
    // rounding can push |cos| a hair past 1
    (dot / (na * nb)).max(-T::one()).min(T::one())
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub(crate) fn dot_self<T: Scalar>(a: &[T]) -> T {
    dot(a, a)
}
