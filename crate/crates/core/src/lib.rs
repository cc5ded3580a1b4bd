//! Heralded microwave-optical links between superconducting processors:
//! heralding analytics, on-demand delivery, distillation, Monte Carlo
//! checks and architecture-level resource planning.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod delivery;
pub mod distill;
pub mod error;
pub mod io;
pub mod mc;
pub mod model;
pub mod planner;
pub mod presets;
pub mod protocol;

pub use error::{LinkError, Result};
