//! Wideband THz beam tracking with true-time-delay beam zooming.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod beamform;
pub mod channel;
pub mod error;
pub mod expcli;
pub mod syscfg;
pub mod tracking;

pub use error::{Error, Result};
