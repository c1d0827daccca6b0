//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Real floating-point scalar (`f32` or `f64`).
///
/// Tolerances throughout the crate are written as `f64` literals and cast
/// with [`Real::c`]; the defaults are tuned for `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + nalgebra::Scalar
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Cast an `f64` constant into this scalar type.
    #[inline]
    fn c(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 constant representable")
    }

    /// Lossy view as `f64`, used for reports and serialization.
    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::c(n as f64)
    }
}

impl Real for f32 {}
impl Real for f64 {}
