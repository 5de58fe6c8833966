//! Floating-point abstraction shared by the model, schedule and sampler code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar the core math is written against: `f32` or `f64`.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal or noise draw into `Self`.
    #[inline]
    fn of(value: f64) -> Self {
        // f32/f64 conversion from f64 never fails (it may round or saturate to inf).
        Self::from_f64(value).unwrap_or_else(Self::nan)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[inline]
pub(crate) fn squared_norm<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, &x| acc + x * x)
}

#[inline]
pub(crate) fn norm<T: Scalar>(v: &[T]) -> T {
    squared_norm(v).sqrt()
}
