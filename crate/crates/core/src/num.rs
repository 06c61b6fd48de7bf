//! Scalar abstraction for the numeric stages.
//!
//! Signal processing, feature extraction, and the classifiers are generic
//! over [`Real`], implemented for [f32] and [f64]. The pipeline and CLI
//! instantiate everything with [f64]; f32 is exercised in unit tests.

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Float scalar trait for signal and model math.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + std::iter::Sum + std::fmt::Debug + std::fmt::Display + 'static
{
    /// Lossless conversion from f64 constants; panics only if the target
    /// type cannot represent any f64 at all (never for f32/f64).
    fn from_f64_c(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant conversion")
    }

    /// Widening conversion for accumulation and reporting.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("f64 conversion")
    }
}

impl Real for f32 {}
impl Real for f64 {}
