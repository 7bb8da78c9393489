//! Floating-point scalar abstraction shared by the reward arithmetic.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real-valued scalar used for rewards, returns and advantages.
///
/// Implemented for `f32` and `f64`. The engine and the wire protocol use
/// `f64`; `f32` is there for trainers that keep rewards in single precision.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Converts a literal constant. Panics only for values the type cannot
    /// represent at all, which never happens for the finite constants used here.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal fits scalar type")
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count fits scalar type")
    }
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
}

/// Arithmetic mean; `None` for an empty input.
pub fn mean<T: Scalar>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    Some(values.iter().copied().sum::<T>() / T::from_count(values.len()))
}

/// Population standard deviation around a given mean.
pub fn population_std<T: Scalar>(values: &[T], mean: T) -> T {
    if values.is_empty() {
        return T::zero();
    }
    let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / T::from_count(values.len());
    var.sqrt()
}
