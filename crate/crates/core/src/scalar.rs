//! Numeric abstraction shared by the network, datasets, and slicing code.

use ndarray::NdFloat;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point element type for networks and encoded datasets.
///
/// Implemented for `f32` and `f64`. Values are persisted through `f64`, which
/// is exact for both.
pub trait Scalar: NdFloat + FromPrimitive + ToPrimitive + Default {
    /// Short type tag written into model files.
    const NAME: &'static str;

    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable in every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";
}
