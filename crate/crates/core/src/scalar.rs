//! Floating-point abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar used for rewards, probabilities, values and kernel algebra.
///
/// Implemented for `f32` and `f64`. Tolerances that depend on the precision
/// are exposed as associated functions so tests and validators can scale
/// their checks.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Tolerance for probability rows summing to one.
    fn row_sum_tolerance() -> Self;

    /// Smallest diagonal jitter worth trying during a Cholesky retry.
    fn min_jitter() -> Self;

    /// Converts a literal. Every `f64` is representable (possibly rounded)
    /// in both implementors.
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
        self.to_f64().expect("finite scalar converts to f64")
    }
}

impl Scalar for f64 {
    fn row_sum_tolerance() -> Self {
        1e-12
    }

    fn min_jitter() -> Self {
        1e-10
    }
}

impl Scalar for f32 {
    fn row_sum_tolerance() -> Self {
        1e-5
    }

    fn min_jitter() -> Self {
        1e-6
    }
}
