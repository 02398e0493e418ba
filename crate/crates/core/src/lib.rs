//! Traffic-emergency planning for road closures.
//!
//! The crate loads a road network and demand, measures the flow a closure
//! disrupts, evaluates congested detour times, computes bottleneck delay
//! from cumulative arrival and departure curves, decides when alternative
//! routes are worth opening, and simulates staged-departure evacuations.

// `!(x > 0.0)` is deliberate: NaN must fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod activation;
pub mod assignment;
pub mod demand;
pub mod error;
pub mod evacuation;
pub mod flowtime;
pub mod netmodel;
pub mod queueing;

pub use error::{Error, Result};
