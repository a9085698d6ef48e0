//! Scalar abstraction for the numerical kernels.
//!
//! The group-lasso solver and the direction primitives are written once for
//! any real field nalgebra can factorize. `f64` is the working precision for
//! the statistical pipeline; `f32` is supported for the kernels.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// A real floating point scalar usable by the solver kernels.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + 'static {
    /// Converts an `f64` literal. Infallible for the supported types.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }

    /// Machine epsilon of the scalar type.
    fn eps() -> Self {
        Self::default_epsilon()
    }
}

impl Real for f32 {}
impl Real for f64 {}
