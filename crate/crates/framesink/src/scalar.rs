//! Floating-point scalar abstraction: the math modules are generic over f32
//! and f64 via `num_traits`. The simulator instantiates everything at f64.

use num_traits::{Float, FromPrimitive};

/// Scalar type usable by every tensor, descriptor, and retrieval operation.
pub trait Scalar:
    Float
    + FromPrimitive
    + core::ops::AddAssign
    + core::ops::SubAssign
    + core::ops::MulAssign
    + core::fmt::Debug
    + core::fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Convert an f64 constant into the working scalar type.
pub(crate) fn real<S: Scalar>(x: f64) -> S {
    S::from_f64(x).expect("f64 constant converts to scalar")
}

/// Convert a count into the working scalar type.
pub(crate) fn count<S: Scalar>(n: usize) -> S {
    S::from_usize(n).expect("count converts to scalar")
}
