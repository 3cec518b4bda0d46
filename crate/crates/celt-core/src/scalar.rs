//! Scalar abstraction over the floating-point element type.
//!
//! Everything numeric in this crate is generic over [`Scalar`] so the same
//! code runs in f64 for gradient checking and oracle tests, and in f32 for
//! training and checkpoints.

use num_traits::{Float, FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display};

/// Floating-point element type for tensors: f32 or f64.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Gauss error function, used by the exact GELU.
    fn erf(self) -> Self;

    /// Shorthand for lossy conversion from f64 constants.
    fn from_f64c(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 constant converts to any Scalar")
    }
}

impl Scalar for f32 {
    fn erf(self) -> Self {
        // Evaluated in f64: erff loses too much accuracy for the gradient
        // checks that exercise f32 code paths indirectly.
        libm::erf(self as f64) as f32
    }
}

impl Scalar for f64 {
    fn erf(self) -> Self {
        libm::erf(self)
    }
}
