//! Scalar abstraction for the numeric core.

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar the numeric core is generic over.
///
/// `f64` is the default throughout the crate (see the aliases at the crate
/// root); `f32` is supported for callers that trade precision for memory.
pub trait Scalar:
    Float
    + FromPrimitive
    + core::ops::AddAssign
    + core::ops::SubAssign
    + core::ops::MulAssign
    + core::ops::DivAssign
    + core::fmt::Debug
    + core::fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Conversion from `f64`, used for constants and RNG draws.
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts to every supported scalar")
    }

    /// Conversion to `f64`, used at reporting and serialization boundaries.
    fn to_f64_lossy(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("every supported scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
