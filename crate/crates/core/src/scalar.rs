//! Scalar abstraction used by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real field the model is evaluated over: `f32` or `f64`.
///
/// The tolerances quoted throughout the crate (1e-10, 1e-12) are only
/// reachable in `f64`; `f32` is supported for quick exploratory runs.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into the scalar type.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// L1 distance between two vectors of equal length.
pub fn l1_distance<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).sum()
}

/// Total-variation distance, half the L1 distance.
pub fn total_variation<S: Scalar>(a: &[S], b: &[S]) -> S {
    l1_distance(a, b) * S::lit(0.5)
}
