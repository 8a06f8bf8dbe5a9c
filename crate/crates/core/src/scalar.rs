//! Scalar abstractions.
//!
//! The order-statistic machinery (trimmed means, attack bounds, certified
//! sizes, the brute-force oracle) only needs ordered field arithmetic, so it
//! is generic over [`Scalar`] and runs unchanged on `f32`, `f64` or an exact
//! rational type. Feature-space code takes square roots and is generic over
//! [`Real`] instead.

use std::cmp::Ordering;
use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, Num};

/// Ordered field element usable by the trimmed-mean and certification code.
pub trait Scalar: Num + Copy + PartialOrd + FromPrimitive + Debug + Send + Sync + 'static {}

impl<T> Scalar for T where T: Num + Copy + PartialOrd + FromPrimitive + Debug + Send + Sync + 'static {}

/// Floating-point scalar (`f32` or `f64`).
pub trait Real: Scalar + Float {}

impl<T> Real for T where T: Scalar + Float {}

/// Converts a small count into the scalar type.
pub(crate) fn count<S: Scalar>(n: usize) -> S {
    S::from_usize(n).expect("count must be representable in the scalar type")
}

/// Total order for values already known to be comparable (finite inputs).
pub(crate) fn cmp<S: PartialOrd>(a: &S, b: &S) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

/// Index of the smallest value; the lowest index wins ties.
pub(crate) fn argmin_first<S: PartialOrd>(values: &[S]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}
