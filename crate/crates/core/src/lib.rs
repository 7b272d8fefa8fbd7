//! Link-level Monte-Carlo simulator for grant-free massive IoT access over a
//! network of high-altitude platforms (HAPs) acting as one aerial cell-free
//! massive MIMO system.
//!
//! The pipeline per trial: place devices under the HAP constellation
//! ([`topology`]), draw sporadic activity and multipath channels
//! ([`channel`]), synthesize pilot observations at every edge anchor
//! ([`airframe`]), detect active devices and estimate their channels
//! ([`detector`]) and score the outcome ([`metrics`]). [`experiment`] wires
//! this into reproducible runs and sweeps driven by [`config`].

// `!(x > 0.0)` style checks reject NaN along with the out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod airframe;
pub mod channel;
pub mod config;
pub mod detector;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod metrics;
pub mod output;
pub mod rng;
pub mod scalar;
pub mod topology;

pub use error::{Error, Result};
pub use scalar::{Cx, Real};

/// Complex sample at double precision.
pub type Complex = num_complex::Complex64;
/// Double-precision channel set.
pub type ChannelSet = channel::AccessChannelSet<f64>;
/// Double-precision pilot book.
pub type Pilots = airframe::PilotBook<f64>;
/// Double-precision anchor observations.
pub type Frame = airframe::ReceivedFrame<f64>;
/// Double-precision network detection outcome.
pub type Detection = detector::DetectionResult<f64>;
/// Single-precision channel set.
pub type ChannelSet32 = channel::AccessChannelSet<f32>;
/// Single-precision pilot book.
pub type Pilots32 = airframe::PilotBook<f32>;
