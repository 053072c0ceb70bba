//! Reactive obstacle avoidance for a nano-drone carrying an 8x8 multi-zone
//! time-of-flight sensor, together with the sensor model, a deterministic
//! closed-loop simulator and flight-log tooling used to evaluate it.

// Grids are indexed by (row, col) throughout, and `!(x > 0.0)` style checks
// are how NaN gets rejected.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod perception;
pub mod policy;
pub mod sensor;
pub mod sim;

pub use config::RunConfig;
pub use error::{Error, Result};
