//! Dwell-time stability analysis and clock-dependent gain-scheduled synthesis
//! for LPV time-delay systems with piecewise-constant parameters.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use openblas_src as _;

pub mod analysis;
pub mod config;
pub mod error;
pub mod examples;
pub mod lmi;
pub mod model;
pub mod poly;
pub mod sdp;
pub mod sim;
pub mod synthesis;
pub mod workflow;

pub use error::{Error, Result};
