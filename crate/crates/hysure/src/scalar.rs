//! Scalar abstraction: the numeric element type of cubes and transforms.

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point element type: f32 or f64.
///
/// All numeric code in this crate is written against this trait; the
/// concrete aliases at the crate root pin f64 for command-line use.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + LinalgScalar
    + ScalarOperand
    + Sum
    + Send
    + Sync
    + Debug
    + Display
    + 'static
{
    /// Lossy conversion from f64, for embedded constants and grids.
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to scalar")
    }

    /// Conversion from usize counts.
    fn from_count(v: usize) -> Self {
        Self::from_usize(v).expect("count fits in scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
