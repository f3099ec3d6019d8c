//! Floating-point scalar abstraction: f32 or f64.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Scalar type the numerical core is generic over.
///
/// The solver code never names `f64` directly; everything is written
/// against this trait so the same algorithms run in single or double
/// precision. Tolerance defaults assume f64; callers using f32 should
/// loosen them accordingly.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum<Self>
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Shorthand for converting an f64 literal into the scalar type.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("literal not representable in scalar type")
    }

    /// f64 view of the value, for formatting and reporting.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar not representable as f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Max-norm of a slice; returns 0 for an empty slice.
pub fn norm_inf<T: Scalar>(values: &[T]) -> T {
    values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
}

/// 1-norm of a slice.
pub fn norm_1<T: Scalar>(values: &[T]) -> T {
    values.iter().map(|v| v.abs()).sum()
}
