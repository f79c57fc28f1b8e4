//! Floating point abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar used for timestamps, progress values and rewards: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Slack applied when a computed value must be compared against an exact
    /// rational boundary (bin edges, the 100% mark).
    fn boundary_tolerance() -> Self;

    /// Lossless for every literal this crate uses (small integers and decimals).
    #[inline]
    fn lit(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("scalar literal")
    }

    #[inline]
    fn from_count(v: usize) -> Self {
        <Self as FromPrimitive>::from_usize(v).expect("count fits scalar")
    }

    #[inline]
    fn hundred() -> Self {
        Self::lit(100.0)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    #[inline]
    fn boundary_tolerance() -> Self {
        // ~64 ulp at the top of the [0, n] bin range
        64.0 * f32::EPSILON
    }
}

impl Scalar for f64 {
    #[inline]
    fn boundary_tolerance() -> Self {
        1e-9
    }
}

/// True when `v` equals 100 up to the boundary tolerance.
#[inline]
pub fn is_hundred<T: Scalar>(v: T) -> bool {
    (v - T::hundred()).abs() <= T::boundary_tolerance()
}
