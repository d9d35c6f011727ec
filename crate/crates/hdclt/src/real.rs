//! Scalar abstraction for the numeric core.

use std::fmt::{Debug, Display};
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive};

/// Floating-point scalar usable by the special-function and supremum modules.
///
/// Implemented for `f32` and `f64` through the blanket impl; all constants are
/// injected via [`Real::c`] so coefficient tables stay written in `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion of an `f64` literal into the scalar type.
    #[inline]
    fn c(x: f64) -> Self {
        Self::from_f64(x).expect("constant conversion")
    }

    /// Conversion from a machine integer (dimension counts, loop indices).
    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count conversion")
    }
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + AddAssign
        + SubAssign
        + MulAssign
        + DivAssign
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}
