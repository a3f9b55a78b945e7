use std::fmt::{Debug, Display};

use ndarray::LinalgScalar;
use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point scalar the metric and LoRA routines are generic over: f32 or f64.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + LinalgScalar
    + std::iter::Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
{
    /// Converts a literal; every literal used in this crate is representable.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable in scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
