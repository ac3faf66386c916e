//! Scalar element abstraction: f32 for training, f64 for gradient checks.

use num_traits::{Float, NumCast};

/// Floating-point element a [`crate::Graph`] computes over. The two
/// implementors share every code path, so a gradient verified in f64 vouches
/// for the f32 graph running the same tape.
pub trait Element: Float + std::fmt::Debug + Default + Send + Sync + 'static {
    fn from_f64(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("f64 converts to every element type")
    }

    fn to_f64(self) -> f64 {
        <f64 as NumCast>::from(self).expect("every element type converts to f64")
    }
}

impl Element for f32 {}
impl Element for f64 {}
