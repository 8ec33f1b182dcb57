//! Floating point abstraction for the numeric core.
//!
//! All estimation and inference routines are generic over [`Scalar`], so the
//! same code runs in `f32` or `f64`. The crate-root aliases pin `f64`, which
//! is the precision every tolerance in the test suite is stated for.

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};
use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

/// Scalar type the numeric core is generic over.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum<Self>
    + for<'a> Sum<&'a Self>
    + Debug
    + Display
    + LowerExp
    + ndarray::ScalarOperand
    + serde::Serialize
    + serde::de::DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`. Distribution tables and RNG draws are
    /// produced in `f64` and narrowed through this.
    fn cast(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to any Scalar")
    }

    /// Widening conversion to `f64`.
    fn to64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }

    fn usize(v: usize) -> Self {
        Self::from_usize(v).expect("usize converts to any Scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
