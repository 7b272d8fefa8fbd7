//! Scalar abstraction for the numerical kernels.
//!
//! Channel assembly, pilot synthesis and every detector routine are written
//! against [`Real`] so the same code runs in `f32` (fast sweeps) or `f64`
//! (verification). Geometry and configuration stay in `f64`.

use std::fmt::{Debug, Display};

use ndarray::{LinalgScalar, ScalarOperand};
use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Real floating-point scalar usable by every kernel in the crate.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + ScalarOperand
    + LinalgScalar
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal or draw.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Real")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + ScalarOperand
        + LinalgScalar
        + Debug
        + Display
        + Default
        + Send
        + Sync
        + 'static
{
}

/// Complex sample over a [`Real`] scalar.
pub type Cx<T> = Complex<T>;
