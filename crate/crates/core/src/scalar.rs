//! Scalar abstraction for the numeric core.
//!
//! Closed-form math in this crate (link budgets, Shannon rates, reward
//! shaping, Q-value updates, route costs) is generic over [`Scalar`] so it
//! can be evaluated at `f32` or `f64`. The simulator instantiates everything
//! at [`crate::Real`] via the aliases at the crate root.

use num_traits::Float;

/// Floating point: f32 or f64.
pub trait Scalar: Float + core::fmt::Debug + core::fmt::Display + Send + Sync + 'static {}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts an `f64` constant or parameter into the scalar type.
pub fn cast<F: Scalar>(value: f64) -> F {
    F::from(value).expect("finite f64 constant")
}
