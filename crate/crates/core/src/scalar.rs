//! Scalar abstraction shared by every kernel.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use rustfft::FftNum;

/// Floating point type the grid kernels are generic over (`f32` or `f64`).
///
/// Tolerances quoted throughout the crate assume `f64`; the `f32`
/// instantiation is useful for smoke runs and memory-bound experiments.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + FftNum
    + Debug
    + Display
    + LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite value")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Maximum of `|x|` over a slice (0 for an empty slice).
#[inline]
pub fn sup_norm<T: Real>(xs: &[T]) -> T {
    xs.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

/// Euclidean norm of a slice.
#[inline]
pub fn l2_norm<T: Real>(xs: &[T]) -> T {
    xs.iter().fold(T::zero(), |a, &x| a + x * x).sqrt()
}
